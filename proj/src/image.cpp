#include "image.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "volume.hpp"  // FormatError

namespace cloudnn {

void write_pfm(const Image& img, const std::string& path) {
    if (img.width <= 0 || img.height <= 0)
        throw FormatError("cannot write an empty image");
    for (const Vec3& p : img.pixels)
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw FormatError("refusing to write non-finite pixels");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
    // rows bottom to top
    for (int y = img.height - 1; y >= 0; --y)
        for (int x = 0; x < img.width; ++x) {
            const Vec3& p = img.at(x, y);
            float rgb[3] = {static_cast<float>(p.x), static_cast<float>(p.y),
                            static_cast<float>(p.z)};
            out.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
        }
    if (!out) throw FormatError("write failed: " + path);
}

namespace {
float byteswap_f32(float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    u = ((u & 0xff000000u) >> 24) | ((u & 0x00ff0000u) >> 8) | ((u & 0x0000ff00u) << 8) |
        ((u & 0x000000ffu) << 24);
    std::memcpy(&v, &u, 4);
    return v;
}
}  // namespace

Image read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    std::string tag;
    in >> tag;
    if (tag != "PF") throw FormatError(path + ": only color 'PF' images are supported");
    int w, h;
    double scale;
    if (!(in >> w >> h >> scale) || w <= 0 || h <= 0 || scale == 0)
        throw FormatError(path + ": malformed PFM header");
    in.get();  // single whitespace after the scale line

    bool big_endian = scale > 0;
    Image img(w, h);
    std::vector<float> row(static_cast<size_t>(w) * 3);
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) throw FormatError(path + ": truncated pixel data");
        for (int x = 0; x < w; ++x) {
            float r = row[3 * x], g = row[3 * x + 1], b = row[3 * x + 2];
            if (big_endian) {
                r = byteswap_f32(r);
                g = byteswap_f32(g);
                b = byteswap_f32(b);
            }
            img.at(x, y) = {r, g, b};
        }
    }
    return img;
}

ImageMetrics metrics(const Image& a, const Image& reference) {
    if (a.width != reference.width || a.height != reference.height)
        throw std::invalid_argument("image dimensions differ");
    double se = 0, ref_sq = 0;
    size_t n = a.pixels.size() * 3;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        Vec3 d = a.pixels[i] - reference.pixels[i];
        se += d.x * d.x + d.y * d.y + d.z * d.z;
        const Vec3& r = reference.pixels[i];
        ref_sq += r.x * r.x + r.y * r.y + r.z * r.z;
    }
    ImageMetrics m;
    m.rmse = std::sqrt(se / n);
    // Normalized by the reference RMS rather than its mean; mostly-empty
    // frames would otherwise let a handful of dark pixels dominate the ratio.
    double rms_ref = std::sqrt(ref_sq / n);
    m.relative_rmse = rms_ref > 0 ? m.rmse / rms_ref : (m.rmse > 0 ? INFINITY : 0.0);
    return m;
}

}  // namespace cloudnn
