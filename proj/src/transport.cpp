#include "transport.hpp"

#include <cmath>
#include <stdexcept>

namespace cloudnn {

Medium Medium::from_volume(const NormalizedVolume* vol, double albedo, PhaseFunction first,
                           PhaseFunction rest) {
    if (!vol) throw std::invalid_argument("medium needs a volume");
    if (!(albedo >= 0 && albedo <= 1)) throw std::invalid_argument("albedo must lie in [0, 1]");
    Medium m;
    m.volume = vol;
    m.albedo = albedo;
    m.phase_first = std::move(first);
    m.phase_rest = std::move(rest);
    return m;
}

Medium Medium::homogeneous_sphere(const Vec3& center, double radius, double mu_t, double albedo,
                                  PhaseFunction phase) {
    Medium m;
    m.analytic_sphere = true;
    m.sphere_center = center;
    m.sphere_radius = radius;
    m.sphere_mu_t = mu_t;
    m.albedo = albedo;
    m.phase_first = phase;
    m.phase_rest = std::move(phase);
    return m;
}

double Medium::mu_t_at(const Vec3& p) const {
    if (analytic_sphere) {
        Vec3 d = p - sphere_center;
        return dot(d, d) <= sphere_radius * sphere_radius ? sphere_mu_t : 0.0;
    }
    return volume->density_at(p, 0) / volume->mfp;
}

double Medium::majorant() const {
    if (analytic_sphere) return sphere_mu_t;
    return volume->majorant();
}

Box3 Medium::bounds() const {
    if (analytic_sphere) {
        Vec3 r{sphere_radius, sphere_radius, sphere_radius};
        return {sphere_center - r, sphere_center + r};
    }
    return volume->grid.world_box;
}

std::optional<Vec3> sample_free_flight(const Medium& medium, const Vec3& x, const Vec3& omega,
                                       Rng& rng) {
    double mu_bar = medium.majorant();
    if (!(mu_bar > 0)) return std::nullopt;
    double t0, t1;
    if (!medium.bounds().intersect(x, omega, t0, t1)) return std::nullopt;
    double t = std::max(t0, 0.0);
    if (t1 <= t) return std::nullopt;
    for (;;) {
        t -= std::log(1.0 - rng.uniform()) / mu_bar;
        if (t >= t1) return std::nullopt;
        Vec3 p = x + omega * t;
        if (rng.uniform() * mu_bar < medium.mu_t_at(p)) return p;
    }
}

namespace {

double ratio_track(const Medium& medium, const Vec3& x, const Vec3& omega, double t_max,
                   Rng& rng) {
    double mu_bar = medium.majorant();
    if (!(mu_bar > 0)) return 1.0;
    double t0, t1;
    if (!medium.bounds().intersect(x, omega, t0, t1)) return 1.0;
    double t = std::max(t0, 0.0);
    double end = std::min(t1, t_max);
    if (end <= t) return 1.0;
    double T = 1.0;
    for (;;) {
        t -= std::log(1.0 - rng.uniform()) / mu_bar;
        if (t >= end) return T;
        Vec3 p = x + omega * t;
        T *= 1.0 - medium.mu_t_at(p) / mu_bar;
        if (T <= 0.0) return 0.0;
    }
}

}  // namespace

double transmittance(const Medium& medium, const Vec3& x, const Vec3& y, Rng& rng) {
    Vec3 d = y - x;
    double len = length(d);
    if (len == 0.0) return 1.0;
    return ratio_track(medium, x, d / len, len, rng);
}

double transmittance_to_boundary(const Medium& medium, const Vec3& x, const Vec3& omega,
                                 Rng& rng) {
    return ratio_track(medium, x, omega, 1e300, rng);
}

TraceResult trace_radiance(const Medium& medium, const Vec3& origin, const Vec3& dir,
                           const std::vector<DirectionalLight>& lights, int max_bounces,
                           Rng& rng) {
    TraceResult res;
    max_bounces = std::min(max_bounces, kBounceCap);
    Vec3 pos = origin;
    Vec3 d = dir;
    for (int bounce = 1; bounce <= max_bounces; ++bounce) {
        auto hit = sample_free_flight(medium, pos, d, rng);
        if (!hit) {
            if (bounce == 1) {
                res.primary_escaped = true;
                res.escape_dir = d;
            }
            return res;
        }
        Vec3 x = *hit;
        if (rng.uniform() >= medium.albedo) return res;  // absorbed
        const PhaseFunction& phase = (bounce == 1) ? medium.phase_first : medium.phase_rest;
        for (const auto& light : lights) {
            double p = phase.eval(dot(d, light.dir_to_light));
            if (p <= 0.0) continue;
            double T = transmittance_to_boundary(medium, x, light.dir_to_light, rng);
            res.radiance += light.irradiance * (p * T);
        }
        d = phase.sample(d, rng.uniform(), rng.uniform()).dir;
        pos = x;
    }
    return res;
}

LiEstimate estimate_Li(const Medium& medium, const Vec3& x, const Vec3& omega,
                       const Vec3& omega_l, const StopRule& stop, Rng& rng) {
    if (!(medium.mu_t_at(x) > 0))
        throw std::invalid_argument("estimate_Li requires a point with positive density");
    std::vector<DirectionalLight> light{{omega_l, {1, 1, 1}}};

    double mean = 0, m2 = 0;
    uint32_t n = 0;
    LiEstimate est;
    for (;;) {
        // continuation direction from the rest-phase; pdf cancels its eval
        Vec3 what = medium.phase_rest.sample(omega, rng.uniform(), rng.uniform()).dir;
        Vec3 pos = x;
        Vec3 d = what;
        double sample_value = 0;
        for (int bounce = 1; bounce <= kBounceCap; ++bounce) {
            auto hit = sample_free_flight(medium, pos, d, rng);
            if (!hit) break;
            if (rng.uniform() >= medium.albedo) break;
            double p = medium.phase_rest.eval(dot(d, omega_l));
            if (p > 0.0)
                sample_value += p * transmittance_to_boundary(medium, *hit, omega_l, rng);
            d = medium.phase_rest.sample(d, rng.uniform(), rng.uniform()).dir;
            pos = *hit;
        }
        ++n;
        double delta = sample_value - mean;
        mean += delta / n;
        m2 += delta * (sample_value - mean);

        if (n >= static_cast<uint32_t>(stop.min_samples)) {
            double se = n > 1 ? std::sqrt(m2 / (n - 1) / n) : 0.0;
            if (std::abs(mean) >= stop.abs_floor &&
                stop.confidence_z * se <= stop.rel_tol * std::abs(mean)) {
                est.stopped_by_rel = true;
                break;
            }
        }
        if (n >= static_cast<uint32_t>(stop.max_samples)) break;
    }
    est.mean = mean;
    est.n_samples = n;
    est.stderr_ = n > 1 ? std::sqrt(m2 / (n - 1) / n) : 0.0;
    return est;
}

Vec3 quadrature_single_scatter(const Medium& medium, const Vec3& origin, const Vec3& dir,
                               const DirectionalLight& light, int nodes) {
    if (!medium.analytic_sphere)
        throw std::runtime_error("single-scatter quadrature supports analytic spheres only");
    if (nodes < 512) nodes = 512;
    if (nodes % 2) ++nodes;

    double t0, t1;
    Vec3 oc = origin - medium.sphere_center;
    double b = dot(oc, dir);
    double c = dot(oc, oc) - medium.sphere_radius * medium.sphere_radius;
    double disc = b * b - c;
    if (disc <= 0) return {0, 0, 0};
    double sq = std::sqrt(disc);
    t0 = std::max(0.0, -b - sq);
    t1 = -b + sq;
    if (t1 <= t0) return {0, 0, 0};

    double mu_t = medium.sphere_mu_t;
    double mu_s = medium.albedo * mu_t;
    double p = medium.phase_first.eval(dot(dir, light.dir_to_light));

    auto chord_out = [&](const Vec3& x) {
        // distance inside the sphere from x along the light direction
        Vec3 xc = x - medium.sphere_center;
        double bb = dot(xc, light.dir_to_light);
        double cc = dot(xc, xc) - medium.sphere_radius * medium.sphere_radius;
        double dd = bb * bb - cc;
        if (dd <= 0) return 0.0;
        return std::max(0.0, -bb + std::sqrt(dd));
    };

    double h = (t1 - t0) / nodes;
    double acc = 0;
    for (int i = 0; i <= nodes; ++i) {
        double t = t0 + i * h;
        Vec3 x = origin + dir * t;
        double f = std::exp(-mu_t * (t - t0)) * mu_s * p * std::exp(-mu_t * chord_out(x));
        double w = (i == 0 || i == nodes) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * f;
    }
    return light.irradiance * (acc * h / 3.0);
}

}  // namespace cloudnn
