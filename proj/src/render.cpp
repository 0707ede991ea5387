#include "render.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace cloudnn {

void Camera::validate() const {
    if (!(vfov_deg > 0 && vfov_deg < 180)) throw std::invalid_argument("camera fov out of range");
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera resolution invalid");
    Vec3 view = look_at - position;
    if (length(view) < 1e-12) throw std::invalid_argument("camera position equals look_at");
    if (length(cross(normalize(view), normalize(up))) < 1e-9)
        throw std::invalid_argument("camera up vector is parallel to the view direction");
}

Vec3 Camera::ray_dir(int px, int py, double jx, double jy) const {
    Vec3 fwd = normalize(look_at - position);
    Vec3 right = normalize(cross(fwd, up));
    Vec3 v_up = cross(right, fwd);
    double tan_half = std::tan(0.5 * vfov_deg * M_PI / 180.0);
    double aspect = static_cast<double>(width) / height;
    double sx = (2.0 * ((px + jx) / width) - 1.0) * tan_half * aspect;
    double sy = (1.0 - 2.0 * ((py + jy) / height)) * tan_half;
    return normalize(fwd + right * sx + v_up * sy);
}

namespace {
double luminance(const Vec3& c) { return 0.2126 * c.x + 0.7152 * c.y + 0.0722 * c.z; }
}  // namespace

EnvMap::EnvMap(Image img, int n_dirs) : img_(std::move(img)), n_dirs_(n_dirs) {
    if (n_dirs_ < 1) throw std::invalid_argument("envmap needs at least one direction sample");
    size_t n = img_.pixels.size();
    cdf_.resize(n);
    double acc = 0;
    for (int y = 0; y < img_.height; ++y) {
        double sin_theta = std::sin(M_PI * (y + 0.5) / img_.height);
        for (int x = 0; x < img_.width; ++x) {
            acc += std::max(0.0, luminance(img_.at(x, y))) * sin_theta + 1e-12;
            cdf_[static_cast<size_t>(y) * img_.width + x] = acc;
        }
    }
    total_weight_ = acc;
    for (auto& v : cdf_) v /= acc;
}

Vec3 EnvMap::radiance(const Vec3& dir) const {
    double theta = std::acos(std::clamp(dir.y, -1.0, 1.0));
    double phi = std::atan2(dir.z, dir.x);
    double u = phi / (2.0 * M_PI) + 0.5;
    double v = theta / M_PI;
    int x = std::clamp(static_cast<int>(u * img_.width), 0, img_.width - 1);
    int y = std::clamp(static_cast<int>(v * img_.height), 0, img_.height - 1);
    return img_.at(x, y);
}

EnvMap::DirSample EnvMap::sample(double u1, double u2) const {
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u1);
    size_t idx = std::min(cdf_.size() - 1, static_cast<size_t>(it - cdf_.begin()));
    int y = static_cast<int>(idx / img_.width);
    int x = static_cast<int>(idx % img_.width);
    double theta = M_PI * (y + 0.5) / img_.height;
    double phi = 2.0 * M_PI * ((x + u2) / img_.width - 0.5);
    Vec3 dir{std::sin(theta) * std::cos(phi), std::cos(theta), std::sin(theta) * std::sin(phi)};
    DirSample s;
    s.dir = dir;
    s.radiance = img_.at(x, y);
    s.pdf = pdf(dir);
    return s;
}

double EnvMap::pdf(const Vec3& dir) const {
    double theta = std::acos(std::clamp(dir.y, -1.0, 1.0));
    double phi = std::atan2(dir.z, dir.x);
    double u = phi / (2.0 * M_PI) + 0.5;
    double v = theta / M_PI;
    int x = std::clamp(static_cast<int>(u * img_.width), 0, img_.width - 1);
    int y = std::clamp(static_cast<int>(v * img_.height), 0, img_.height - 1);
    size_t idx = static_cast<size_t>(y) * img_.width + x;
    double p_tex = cdf_[idx] - (idx > 0 ? cdf_[idx - 1] : 0.0);
    double sin_theta = std::max(1e-9, std::sin(M_PI * (y + 0.5) / img_.height));
    double texel_omega = (2.0 * M_PI / img_.width) * (M_PI / img_.height) * sin_theta;
    return p_tex / texel_omega;
}

std::vector<DirectionalLight> EnvMap::expand() const {
    std::vector<DirectionalLight> lights;
    lights.reserve(n_dirs_);
    Rng rng = make_stream(0xe2f, 0);  // fixed phase for the stratified jitter
    for (int i = 0; i < n_dirs_; ++i) {
        double u1 = (i + 0.5) / n_dirs_;
        DirSample s = sample(u1, rng.uniform());
        if (s.pdf <= 0) continue;
        lights.push_back({s.dir, s.radiance / (s.pdf * n_dirs_)});
    }
    return lights;
}

double ttuv(const RenderStats& stats) { return stats.seconds * stats.mean_variance; }

double speedup(const RenderStats& reference, const RenderStats& ours) {
    double t_ref = ttuv(reference), t_ours = ttuv(ours);
    if (!(t_ours > 0)) throw std::runtime_error("speedup undefined for zero TTUV");
    return t_ref / t_ours;
}

namespace {

// Path-traced sample with optional environment MIS (one-sample balance
// heuristic between phase sampling and envmap importance sampling).
Vec3 pt_sample(const Scene& scene, const Vec3& origin, const Vec3& dir, int max_bounces,
               Rng& rng) {
    const Medium& medium = *scene.medium;
    Vec3 L{0, 0, 0};
    Vec3 pos = origin;
    Vec3 d = dir;
    double last_phase_pdf = 0;  // pdf of the direction that led to this segment
    max_bounces = std::min(max_bounces, kBounceCap);

    for (int bounce = 1; bounce <= max_bounces + 1; ++bounce) {
        auto hit = sample_free_flight(medium, pos, d, rng);
        if (!hit) {
            if (scene.envmap) {
                if (bounce == 1) {
                    L += scene.envmap->radiance(d);  // camera sees the sky directly
                } else {
                    double p_env = scene.envmap->pdf(d);
                    double w = last_phase_pdf / (last_phase_pdf + p_env);
                    L += scene.envmap->radiance(d) * w;
                }
            }
            return L;
        }
        if (bounce > max_bounces) return L;
        Vec3 x = *hit;
        if (rng.uniform() >= medium.albedo) return L;  // absorbed
        const PhaseFunction& phase = (bounce == 1) ? medium.phase_first : medium.phase_rest;

        for (const auto& light : scene.lights) {
            double p = phase.eval(dot(d, light.dir_to_light));
            if (p <= 0.0) continue;
            double T = transmittance_to_boundary(medium, x, light.dir_to_light, rng);
            L += light.irradiance * (p * T);
        }
        if (scene.envmap) {
            auto es = scene.envmap->sample(rng.uniform(), rng.uniform());
            if (es.pdf > 0) {
                double p = phase.eval(dot(d, es.dir));
                if (p > 0) {
                    double w = es.pdf / (es.pdf + p);
                    double T = transmittance_to_boundary(medium, x, es.dir, rng);
                    L += es.radiance * (p * T * w / es.pdf);
                }
            }
        }

        PhaseSample ps = phase.sample(d, rng.uniform(), rng.uniform());
        d = ps.dir;
        last_phase_pdf = ps.pdf;
        pos = x;
    }
    return L;
}

Vec3 rpnn_sample(const Scene& scene, const std::vector<DirectionalLight>& eff_lights,
                 const Vec3& origin, const Vec3& dir, const Params& model,
                 const StencilSpec& stencil, Rng& rng) {
    const Medium& medium = *scene.medium;
    auto hit = sample_free_flight(medium, origin, dir, rng);
    if (!hit) return scene.envmap ? scene.envmap->radiance(dir) : Vec3{0, 0, 0};

    Vec3 x = *hit;
    Vec3 L{0, 0, 0};
    for (const auto& light : eff_lights) {
        double direct = medium.phase_first.eval(dot(dir, light.dir_to_light)) *
                        transmittance_to_boundary(medium, x, light.dir_to_light, rng);
        Descriptor desc = extract_descriptor(*medium.volume, x, dir, light.dir_to_light, stencil);
        std::vector<float> f = desc.flat();
        Eigen::VectorXd z(f.size());
        for (size_t i = 0; i < f.size(); ++i) z(static_cast<long>(i)) = f[i];
        double indirect = forward(model, z);
        L += light.irradiance * (direct + indirect);
    }
    return L * medium.albedo;
}

}  // namespace

RenderResult render(const Scene& scene, const RenderConfig& cfg, const Params* model) {
    if (!scene.medium) throw std::invalid_argument("scene needs a medium");
    scene.camera.validate();
    if (cfg.spp < 1) throw std::invalid_argument("spp must be >= 1");
    if (cfg.mode == RenderMode::Rpnn) {
        if (!model) throw std::invalid_argument("rpnn mode needs a model");
        if (!scene.medium->volume)
            throw std::invalid_argument("rpnn mode needs a grid-backed medium");
        if (model->arch.kind == ArchKind::Rpnn && model->arch.levels != cfg.stencil.levels)
            throw std::invalid_argument("model level count does not match the stencil spec");
        if (model->arch.input_size() != cfg.stencil.feature_len())
            throw std::invalid_argument("model input size does not match the stencil spec");
    }

    const Camera& cam = scene.camera;
    int w = cam.width, h = cam.height;
    int max_bounces = cfg.mode == RenderMode::SingleScatter ? 1 : cfg.max_bounces;

    std::vector<DirectionalLight> eff_lights = scene.lights;
    if (cfg.mode == RenderMode::Rpnn && scene.envmap) {
        auto env_dirs = scene.envmap->expand();
        eff_lights.insert(eff_lights.end(), env_dirs.begin(), env_dirs.end());
    }

    Image img(w, h);
    std::vector<Vec3> sum(img.pixels.size()), sumsq(img.pixels.size());

    auto t_start = std::chrono::steady_clock::now();
#pragma omp parallel for schedule(dynamic, 1)
    for (int py = 0; py < h; ++py) {
        for (int px = 0; px < w; ++px) {
            size_t pix = static_cast<size_t>(py) * w + px;
            Vec3 s{0, 0, 0}, s2{0, 0, 0};
            for (int sample = 0; sample < cfg.spp; ++sample) {
                Rng rng = make_stream(cfg.seed, pix * static_cast<uint64_t>(cfg.spp) + sample);
                Vec3 d = cam.ray_dir(px, py, rng.uniform(), rng.uniform());
                Vec3 v;
                if (cfg.mode == RenderMode::Rpnn)
                    v = rpnn_sample(scene, eff_lights, cam.position, d, *model, cfg.stencil, rng);
                else
                    v = pt_sample(scene, cam.position, d, max_bounces, rng);
                s += v;
                s2 += v * v;
            }
            sum[pix] = s;
            sumsq[pix] = s2;
            img.pixels[pix] = s / cfg.spp;
        }
    }
    auto t_end = std::chrono::steady_clock::now();

    RenderStats stats;
    stats.seconds = std::chrono::duration<double>(t_end - t_start).count();
    stats.spp = cfg.spp;
    if (cfg.spp > 1) {
        double acc = 0;
        for (size_t i = 0; i < img.pixels.size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                double m = sum[i][c] / cfg.spp;
                double var = (sumsq[i][c] - cfg.spp * m * m) / (cfg.spp - 1);
                acc += std::max(0.0, var) / cfg.spp;  // variance of the pixel mean
            }
        }
        stats.mean_variance = acc / (img.pixels.size() * 3);
    }
    stats.ttuv = stats.seconds * stats.mean_variance;
    return {std::move(img), stats};
}

}  // namespace cloudnn
