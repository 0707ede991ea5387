#pragma once

#include <vector>

#include "vecmath.hpp"
#include "volume.hpp"

namespace cloudnn {

// Light-oriented right-handed frame: z points toward the light, x is
// perpendicular to the plane spanned by the light and view directions.
struct Frame {
    Vec3 x_axis, y_axis, z_axis;
    Vec3 to_world(const Vec3& v) const {
        return x_axis * v.x + y_axis * v.y + z_axis * v.z;
    }
};

struct StencilSpec {
    int levels = 10;           // K
    int nx = 5, ny = 5, nz = 9;
    Vec3 box_min{-1, -1, -1};  // MFP units at level 1
    Vec3 box_max{1, 1, 3};

    int points_per_level() const { return nx * ny * nz; }        // 225
    int feature_len() const { return levels * points_per_level() + 1; }
    double scale(int k) const { return std::pow(2.0, k - 1); }   // k is 1-based
};

struct Descriptor {
    std::vector<float> sigma;  // levels * 225, level-major, x-fastest
    float gamma = 0;           // view/light angle, radians in [0, pi]

    std::vector<float> flat() const {  // [sigma..., gamma]
        std::vector<float> f = sigma;
        f.push_back(gamma);
        return f;
    }
};

Frame build_frame(const Vec3& omega, const Vec3& omega_l);

// 225 lattice offsets of level k in MFP units, x-fastest then y then z.
std::vector<Vec3> stencil_points(const StencilSpec& spec, int k);

Descriptor extract_descriptor(const NormalizedVolume& volume, const Vec3& x, const Vec3& omega,
                              const Vec3& omega_l, const StencilSpec& spec = {});

// Mip level whose filter footprint matches the level-k point spacing.
int mip_for_level(const NormalizedVolume& volume, const StencilSpec& spec, int k);

}  // namespace cloudnn
