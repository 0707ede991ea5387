#pragma once

#include <optional>
#include <vector>

#include "descriptor.hpp"
#include "image.hpp"
#include "net.hpp"
#include "transport.hpp"

namespace cloudnn {

struct Camera {
    Vec3 position{0, 0, -2};
    Vec3 look_at{0, 0, 0};
    Vec3 up{0, 1, 0};
    double vfov_deg = 45.0;
    int width = 128, height = 128;

    void validate() const;
    // (px, py) pixel indices, (jx, jy) in [0,1) subpixel offsets; returns a
    // unit ray direction from `position`.
    Vec3 ray_dir(int px, int py, double jx, double jy) const;
};

// Lat-long environment emitter (x = azimuth, y = polar angle from +Y).
class EnvMap {
public:
    EnvMap(Image img, int n_dirs);

    Vec3 radiance(const Vec3& dir) const;
    // luminance-importance sample; pdf is over solid angle
    struct DirSample {
        Vec3 dir;
        Vec3 radiance;
        double pdf;
    };
    DirSample sample(double u1, double u2) const;
    double pdf(const Vec3& dir) const;

    // fixed stratified expansion into effective directional lights
    std::vector<DirectionalLight> expand() const;

    int n_dirs() const { return n_dirs_; }

private:
    Image img_;
    int n_dirs_;
    std::vector<double> cdf_;       // over texels
    double total_weight_ = 0;
};

struct Scene {
    const Medium* medium = nullptr;
    Camera camera;
    std::vector<DirectionalLight> lights;
    const EnvMap* envmap = nullptr;
};

enum class RenderMode { PathTrace, Rpnn, SingleScatter };

struct RenderConfig {
    RenderMode mode = RenderMode::PathTrace;
    int spp = 16;
    int max_bounces = kBounceCap;
    uint64_t seed = 0;
    StencilSpec stencil;
};

struct RenderStats {
    double seconds = 0;
    int spp = 0;
    double mean_variance = 0;  // mean over pixels/channels of the variance of the pixel mean
    double ttuv = 0;           // seconds * mean_variance
};

double ttuv(const RenderStats& stats);
double speedup(const RenderStats& reference, const RenderStats& ours);

struct RenderResult {
    Image image;
    RenderStats stats;
};

RenderResult render(const Scene& scene, const RenderConfig& cfg,
                    const Params* model = nullptr);

}  // namespace cloudnn
