#pragma once

#include <optional>
#include <vector>

#include "phase.hpp"
#include "rng.hpp"
#include "vecmath.hpp"
#include "volume.hpp"

namespace cloudnn {

struct DirectionalLight {
    Vec3 dir_to_light;  // unit, pointing from the medium toward the emitter
    Vec3 irradiance;    // RGB, on a plane perpendicular to the direction
};

// Heterogeneous grid medium, or a homogeneous analytic sphere (test oracle
// configurations). Phase cos convention: travel-direction dot products,
// cos = 1 is forward continuation.
struct Medium {
    const NormalizedVolume* volume = nullptr;

    bool analytic_sphere = false;
    Vec3 sphere_center;
    double sphere_radius = 0;
    double sphere_mu_t = 0;

    double albedo = 1.0;
    PhaseFunction phase_first = PhaseFunction::isotropic();  // bounce 1
    PhaseFunction phase_rest = PhaseFunction::isotropic();   // bounce >= 2

    static Medium from_volume(const NormalizedVolume* vol, double albedo,
                              PhaseFunction first, PhaseFunction rest);
    static Medium homogeneous_sphere(const Vec3& center, double radius, double mu_t,
                                     double albedo, PhaseFunction phase);

    double mu_t_at(const Vec3& p) const;
    double majorant() const;
    Box3 bounds() const;
};

struct PathConfig {
    int max_bounces = 16384;  // hard cap, also applied in "unbounded" mode
    uint64_t seed = 0;
};
constexpr int kBounceCap = 16384;

struct StopRule {
    double rel_tol = 0.02;
    double confidence_z = 1.96;
    int min_samples = 64;
    int max_samples = 1 << 20;
    double abs_floor = 1e-6;
};

struct LiEstimate {
    double mean = 0;
    uint32_t n_samples = 0;
    double stderr_ = 0;
    bool stopped_by_rel = false;
};

// Delta tracking with the global majorant; nullopt when the ray escapes.
std::optional<Vec3> sample_free_flight(const Medium& medium, const Vec3& x,
                                       const Vec3& omega, Rng& rng);

// Unbiased ratio-tracking estimate of exp(-integral of mu_t) over [x, y].
double transmittance(const Medium& medium, const Vec3& x, const Vec3& y, Rng& rng);

// Transmittance from x to the medium boundary along omega.
double transmittance_to_boundary(const Medium& medium, const Vec3& x, const Vec3& omega,
                                 Rng& rng);

// One path-traced sample of Eq-style boundary transport for a camera ray:
// delta-tracked collisions, analog absorption, NEE to every directional
// light at every scattering vertex. Background radiance is the caller's
// concern (returns escape via the flag).
struct TraceResult {
    Vec3 radiance{0, 0, 0};
    bool primary_escaped = false;
    Vec3 escape_dir{0, 0, 0};
};
TraceResult trace_radiance(const Medium& medium, const Vec3& origin, const Vec3& dir,
                           const std::vector<DirectionalLight>& lights, int max_bounces,
                           Rng& rng);

// Indirect in-scattered radiance at x for outgoing/probe direction omega and a
// unit-irradiance directional emitter toward omega_l. Samples continuation
// directions from phase_rest; the uncollided (direct) term at x is excluded.
LiEstimate estimate_Li(const Medium& medium, const Vec3& x, const Vec3& omega,
                       const Vec3& omega_l, const StopRule& stop, Rng& rng);

// Deterministic Simpson quadrature of single scattering along a camera ray
// through a homogeneous analytic sphere; the oracle for ss-mode renders.
Vec3 quadrature_single_scatter(const Medium& medium, const Vec3& origin, const Vec3& dir,
                               const DirectionalLight& light, int nodes = 1024);

}  // namespace cloudnn
