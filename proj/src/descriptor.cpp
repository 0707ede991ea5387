#include "descriptor.hpp"

#include <cmath>
#include <stdexcept>

namespace cloudnn {

Frame build_frame(const Vec3& omega, const Vec3& omega_l) {
    double lo = length(omega), ll = length(omega_l);
    if (lo < 1e-12 || ll < 1e-12)
        throw std::invalid_argument("build_frame needs non-zero directions");
    Vec3 w = omega / lo;
    Vec3 z = omega_l / ll;

    Vec3 x = cross(z, w);
    double xl = length(x);
    if (xl < 1e-6) {
        // view parallel to the light: project a fixed fallback onto the plane
        Vec3 fallback = std::abs(std::abs(z.x) - 1.0) < 1e-3 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
        x = fallback - z * dot(fallback, z);
        x = normalize(x);
    } else {
        x = x / xl;
    }
    Frame f;
    f.x_axis = x;
    f.z_axis = z;
    f.y_axis = cross(z, x);
    return f;
}

std::vector<Vec3> stencil_points(const StencilSpec& spec, int k) {
    if (k < 1 || k > spec.levels) throw std::out_of_range("stencil level out of range");
    double s = spec.scale(k);
    std::vector<Vec3> pts;
    pts.reserve(spec.points_per_level());
    Vec3 e = spec.box_max - spec.box_min;
    for (int iz = 0; iz < spec.nz; ++iz)
        for (int iy = 0; iy < spec.ny; ++iy)
            for (int ix = 0; ix < spec.nx; ++ix) {
                Vec3 p{spec.box_min.x + e.x * ix / (spec.nx - 1),
                       spec.box_min.y + e.y * iy / (spec.ny - 1),
                       spec.box_min.z + e.z * iz / (spec.nz - 1)};
                pts.push_back(p * s);
            }
    return pts;
}

int mip_for_level(const NormalizedVolume& volume, const StencilSpec& spec, int k) {
    // level-k point spacing is 0.5 * 2^(k-1) MFP; convert to base voxels
    Vec3 vs = volume.grid.voxel_size();
    double voxel = std::cbrt(vs.x * vs.y * vs.z);
    double spacing_world = 0.5 * spec.scale(k) * volume.mfp;
    double spacing_voxels = std::max(1.0, spacing_world / voxel);
    int m = static_cast<int>(std::lround(std::log2(spacing_voxels)));
    return std::clamp(m, 0, volume.mipmap.n_levels() - 1);
}

Descriptor extract_descriptor(const NormalizedVolume& volume, const Vec3& x, const Vec3& omega,
                              const Vec3& omega_l, const StencilSpec& spec) {
    Frame frame = build_frame(omega, omega_l);

    Descriptor d;
    d.sigma.reserve(spec.feature_len() - 1);
    for (int k = 1; k <= spec.levels; ++k) {
        int mip = mip_for_level(volume, spec, k);
        for (const Vec3& u : stencil_points(spec, k)) {
            Vec3 p = x + frame.to_world(u) * volume.mfp;
            d.sigma.push_back(static_cast<float>(volume.density_at(p, mip)));
        }
    }
    double cosg = std::clamp(dot(normalize(omega), normalize(omega_l)), -1.0, 1.0);
    d.gamma = static_cast<float>(std::acos(cosg));
    return d;
}

}  // namespace cloudnn
