#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "vecmath.hpp"

namespace cloudnn {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raw voxel density field. Values are cell-centered, x-fastest.
struct DensityGrid {
    int nx = 0, ny = 0, nz = 0;
    std::vector<float> data;
    Box3 world_box;

    size_t index(int x, int y, int z) const {
        return (static_cast<size_t>(z) * ny + y) * nx + x;
    }
    float at(int x, int y, int z) const { return data[index(x, y, z)]; }
    float& at(int x, int y, int z) { return data[index(x, y, z)]; }

    Vec3 voxel_size() const {
        Vec3 e = world_box.extent();
        return {e.x / nx, e.y / ny, e.z / nz};
    }

    // Trilinear interpolation of cell-centered data, clamped at the faces;
    // exactly 0 outside world_box.
    double sample(const Vec3& p) const;

    void validate() const;  // throws on bad dims / negative / non-finite values
};

struct Mipmap {
    std::vector<DensityGrid> levels;       // level 0 == base grid
    std::vector<double> filter_sigmas;     // sigma_i = 2^i, base-level voxel units
    int n_levels() const { return static_cast<int>(levels.size()); }
};

// Density field scaled so that one unit of distance equals one mean free
// path at the average (non-zero-voxel) density.
struct NormalizedVolume {
    DensityGrid grid;   // world_box rescaled so the longest edge is 1
    Mipmap mipmap;
    double d_bar = 0;   // mean of strictly positive voxels, raw units
    double sigma_t = 0; // extinction per unit raw density, world length^-1
    double mfp = 0;     // 1 / (sigma_t * d_bar)
    double d_max = 0;   // max raw density (delta-tracking majorant)

    // Normalized density rho = d / d_bar at mip level `mip`; mu_t = rho / mfp.
    double density_at(const Vec3& p, int mip = 0) const;
    double majorant() const { return sigma_t * d_max; }
};

DensityGrid load_grid(const std::string& path);
void save_grid(const DensityGrid& grid, const std::string& path);

struct CloudParams {
    int ellipsoids = 4;
    double noise_freq = 4.0;
    double noise_amp = 0.4;
    double threshold = 0.25;
};

DensityGrid gen_procedural_cloud(uint64_t seed, int res, const CloudParams& params = {});

Mipmap build_mipmap(const DensityGrid& grid, int n_levels);

// n_levels <= 0 selects ceil(log2(max dim)) + 1.
NormalizedVolume normalize(const DensityGrid& grid, double sigma_t, int n_levels = 0);

int max_mip_levels(const DensityGrid& grid);

}  // namespace cloudnn
