#pragma once

#include <string>
#include <vector>

#include "vecmath.hpp"

namespace cloudnn {

// Linear-radiance RGB image.
struct Image {
    int width = 0, height = 0;
    std::vector<Vec3> pixels;  // row-major, top-left origin

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h) {}

    Vec3& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
    const Vec3& at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

void write_pfm(const Image& img, const std::string& path);
Image read_pfm(const std::string& path);

struct ImageMetrics {
    double rmse = 0;
    double relative_rmse = 0;  // rmse / rms(reference)
};
ImageMetrics metrics(const Image& a, const Image& reference);

}  // namespace cloudnn
