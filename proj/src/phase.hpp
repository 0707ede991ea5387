#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vecmath.hpp"

namespace cloudnn {

enum class PhaseKind { Isotropic, HenyeyGreenstein, Tabulated };

struct PhaseSample {
    Vec3 dir;    // new propagation direction
    double pdf;  // solid-angle density, equals eval() of the sampled angle
};

// Axially symmetric phase function over the scattering angle; eval takes
// cos(theta) between the incoming and outgoing propagation directions
// (cos = 1 is perfect forward scattering). Integrates to 1 over the sphere.
class PhaseFunction {
public:
    static PhaseFunction isotropic();
    static PhaseFunction henyey_greenstein(double g);
    // theta ascending in [0, pi], values >= 0; renormalized on construction.
    static PhaseFunction tabulated(std::vector<double> theta, std::vector<double> value);

    PhaseKind kind() const { return kind_; }
    double g() const { return g_; }

    double eval(double cos_theta) const;
    PhaseSample sample(const Vec3& omega_in, double u1, double u2) const;

    // Inverse-CDF draw of cos(theta) only (azimuth-free).
    double sample_cos(double u) const;

    // Mean scattering cosine by quadrature (analytic g for HG).
    double mean_cosine() const;

    const std::vector<double>& table_theta() const { return theta_; }
    const std::vector<double>& table_value() const { return value_; }

    PhaseFunction() = default;  // isotropic

private:
    void build_cdf();

    PhaseKind kind_ = PhaseKind::Isotropic;
    double g_ = 0.0;
    std::vector<double> theta_, value_;   // tabulated nodes, normalized
    std::vector<double> cdf_cos_, cdf_;   // cos grid ascending, CDF over cos
};

struct ChoppedPhase {
    PhaseFunction base;     // full tabulated phase
    double theta_c = 0;     // cutoff angle, radians
    double w = 0;           // energy fraction inside the peak
    PhaseFunction chopped;  // renormalized, zero below theta_c
};

// Removes the forward diffraction peak below theta_c and renormalizes.
ChoppedPhase chop(const PhaseFunction& base, double theta_c);

// Similarity reduction matching the chopped phase: the removed forward-peak
// scattering is treated as unscattered light.
struct ReducedCoefficients {
    double mu_t;
    double mu_s;
};
ReducedCoefficients reduced_coefficients(double mu_t, double albedo, double w);

// CSV with header "theta_deg,value"; '#' comment lines allowed.
PhaseFunction load_table(const std::string& path);

// Resample any phase onto a tabulated representation with n theta nodes.
PhaseFunction to_tabulated(const PhaseFunction& p, int n = 1024);

// 2*pi * integral p(theta) sin(theta) dtheta over [a, b], composite Simpson.
double phase_integral(const PhaseFunction& p, double a, double b, int nodes = 4096);

}  // namespace cloudnn
