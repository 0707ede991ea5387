#include "phase.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "volume.hpp"  // FormatError

namespace cloudnn {

namespace {
constexpr double kInv4Pi = 1.0 / (4.0 * M_PI);
constexpr int kCdfNodes = 4096;
}  // namespace

PhaseFunction PhaseFunction::isotropic() {
    PhaseFunction p;
    p.kind_ = PhaseKind::Isotropic;
    return p;
}

PhaseFunction PhaseFunction::henyey_greenstein(double g) {
    if (!(g > -1.0 && g < 1.0))
        throw std::invalid_argument("HG asymmetry must lie in (-1, 1)");
    PhaseFunction p;
    p.kind_ = PhaseKind::HenyeyGreenstein;
    p.g_ = g;
    return p;
}

PhaseFunction PhaseFunction::tabulated(std::vector<double> theta, std::vector<double> value) {
    if (theta.size() != value.size() || theta.size() < 2)
        throw std::invalid_argument("phase table needs matching theta/value arrays");
    for (size_t i = 0; i < theta.size(); ++i) {
        if (i > 0 && !(theta[i] > theta[i - 1]))
            throw std::invalid_argument("phase table theta must be strictly ascending");
        if (!(value[i] >= 0) || !std::isfinite(value[i]))
            throw std::invalid_argument("phase table values must be finite and >= 0");
    }
    if (std::abs(theta.front()) > 1e-9 || std::abs(theta.back() - M_PI) > 1e-9)
        throw std::invalid_argument("phase table must cover [0, pi]");
    theta.front() = 0.0;
    theta.back() = M_PI;

    PhaseFunction p;
    p.kind_ = PhaseKind::Tabulated;
    p.theta_ = std::move(theta);
    p.value_ = std::move(value);

    double integral = phase_integral(p, 0.0, M_PI, 1 << 15);
    if (!(integral > 0)) throw std::invalid_argument("phase table integrates to zero");
    for (auto& v : p.value_) v /= integral;
    p.build_cdf();
    return p;
}

double PhaseFunction::eval(double cos_theta) const {
    cos_theta = std::clamp(cos_theta, -1.0, 1.0);
    switch (kind_) {
        case PhaseKind::Isotropic:
            return kInv4Pi;
        case PhaseKind::HenyeyGreenstein: {
            double denom = 1.0 + g_ * g_ - 2.0 * g_ * cos_theta;
            return kInv4Pi * (1.0 - g_ * g_) / (denom * std::sqrt(denom));
        }
        case PhaseKind::Tabulated: {
            double th = std::acos(cos_theta);
            auto it = std::upper_bound(theta_.begin(), theta_.end(), th);
            size_t i = std::min(theta_.size() - 1,
                                static_cast<size_t>(std::max<ptrdiff_t>(1, it - theta_.begin())));
            double t = (th - theta_[i - 1]) / (theta_[i] - theta_[i - 1]);
            return value_[i - 1] + t * (value_[i] - value_[i - 1]);
        }
    }
    return 0;
}

void PhaseFunction::build_cdf() {
    cdf_cos_.resize(kCdfNodes);
    cdf_.resize(kCdfNodes);
    // trapezoid CDF over cos(theta); pdf over cos is 2*pi*p(cos)
    double prev_p = 0, acc = 0;
    for (int i = 0; i < kCdfNodes; ++i) {
        double c = -1.0 + 2.0 * i / (kCdfNodes - 1);
        double p = 2.0 * M_PI * eval(c);
        if (i > 0) acc += 0.5 * (p + prev_p) * (2.0 / (kCdfNodes - 1));
        cdf_cos_[i] = c;
        cdf_[i] = acc;
        prev_p = p;
    }
    if (!(acc > 0)) throw std::invalid_argument("degenerate phase CDF");
    for (auto& v : cdf_) v /= acc;
}

double PhaseFunction::sample_cos(double u) const {
    switch (kind_) {
        case PhaseKind::Isotropic:
            return 1.0 - 2.0 * u;
        case PhaseKind::HenyeyGreenstein: {
            if (std::abs(g_) < 1e-6) return 1.0 - 2.0 * u;
            double s = (1.0 - g_ * g_) / (1.0 - g_ + 2.0 * g_ * u);
            return std::clamp((1.0 + g_ * g_ - s * s) / (2.0 * g_), -1.0, 1.0);
        }
        case PhaseKind::Tabulated: {
            auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
            size_t i = std::min(cdf_.size() - 1,
                                static_cast<size_t>(std::max<ptrdiff_t>(1, it - cdf_.begin())));
            double c0 = cdf_[i - 1], c1 = cdf_[i];
            double t = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
            return cdf_cos_[i - 1] + t * (cdf_cos_[i] - cdf_cos_[i - 1]);
        }
    }
    return 0;
}

PhaseSample PhaseFunction::sample(const Vec3& omega_in, double u1, double u2) const {
    double c = sample_cos(u1);
    Vec3 dir = direction_from(omega_in, c, 2.0 * M_PI * u2);
    return {dir, eval(c)};
}

double PhaseFunction::mean_cosine() const {
    if (kind_ == PhaseKind::HenyeyGreenstein) return g_;
    if (kind_ == PhaseKind::Isotropic) return 0.0;
    // Simpson over theta of 2*pi*p(theta) sin(theta) cos(theta)
    const int n = 1 << 15;
    double h = M_PI / n;
    double acc = 0;
    for (int i = 0; i <= n; ++i) {
        double th = i * h;
        double f = 2.0 * M_PI * eval(std::cos(th)) * std::sin(th) * std::cos(th);
        double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * f;
    }
    return acc * h / 3.0;
}

double phase_integral(const PhaseFunction& p, double a, double b, int nodes) {
    if (nodes % 2) ++nodes;
    double h = (b - a) / nodes;
    double acc = 0;
    for (int i = 0; i <= nodes; ++i) {
        double th = a + i * h;
        double f = 2.0 * M_PI * p.eval(std::cos(th)) * std::sin(th);
        double w = (i == 0 || i == nodes) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * f;
    }
    return acc * h / 3.0;
}

PhaseFunction to_tabulated(const PhaseFunction& p, int n) {
    std::vector<double> theta(n), value(n);
    for (int i = 0; i < n; ++i) {
        theta[i] = M_PI * i / (n - 1);
        value[i] = p.eval(std::cos(theta[i]));
    }
    return PhaseFunction::tabulated(std::move(theta), std::move(value));
}

ChoppedPhase chop(const PhaseFunction& base, double theta_c) {
    if (base.kind() != PhaseKind::Tabulated)
        throw std::invalid_argument("chop expects a tabulated phase");
    if (!(theta_c >= 0 && theta_c <= M_PI / 2))
        throw std::invalid_argument("chop cutoff must lie in [0, pi/2]");
    if (theta_c == 0.0) return {base, 0.0, 0.0, base};

    double w = phase_integral(base, 0.0, theta_c, 1 << 15);
    if (w >= 0.999) throw std::runtime_error("chop would remove (nearly) all scattered energy");

    // dense resample with the discontinuity pinned at theta_c
    const int n = 4096;
    std::vector<double> theta, value;
    theta.reserve(n + 4);
    value.reserve(n + 4);
    const double eps = std::min(1e-9, theta_c * 0.5);
    theta.push_back(0.0);
    value.push_back(0.0);
    for (int i = 1; i < n; ++i) {
        double th = M_PI * i / (n - 1);
        if (th < theta_c - eps) {
            theta.push_back(th);
            value.push_back(0.0);
        } else if (theta.empty() || theta.back() < theta_c) {
            theta.push_back(theta_c - eps);
            value.push_back(0.0);
            theta.push_back(theta_c);
            value.push_back(base.eval(std::cos(theta_c)) / (1.0 - w));
            if (th > theta_c) {
                theta.push_back(th);
                value.push_back(base.eval(std::cos(th)) / (1.0 - w));
            }
        } else {
            theta.push_back(th);
            value.push_back(base.eval(std::cos(th)) / (1.0 - w));
        }
    }

    ChoppedPhase out;
    out.base = base;
    out.theta_c = theta_c;
    out.w = w;
    out.chopped = PhaseFunction::tabulated(std::move(theta), std::move(value));
    return out;
}

ReducedCoefficients reduced_coefficients(double mu_t, double albedo, double w) {
    if (!(albedo >= 0 && albedo <= 1)) throw std::invalid_argument("albedo must lie in [0, 1]");
    if (!(w >= 0 && w < 1)) throw std::invalid_argument("peak fraction must lie in [0, 1)");
    return {mu_t * (1.0 - albedo * w), albedo * mu_t * (1.0 - w)};
}

PhaseFunction load_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open phase table: " + path);

    std::vector<double> theta, value;
    std::string line;
    int row = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++row;
        size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            std::string h = line.substr(first);
            h.erase(std::remove_if(h.begin(), h.end(),
                                   [](unsigned char c) { return std::isspace(c); }),
                    h.end());
            if (h != "theta_deg,value")
                throw FormatError(path + ": row " + std::to_string(row) +
                                  ": expected header 'theta_deg,value'");
            continue;
        }
        std::istringstream ss(line);
        double deg, v;
        char comma;
        if (!(ss >> deg >> comma >> v) || comma != ',')
            throw FormatError(path + ": row " + std::to_string(row) + ": malformed entry");
        if (!(v >= 0) || !std::isfinite(v))
            throw FormatError(path + ": row " + std::to_string(row) + ": negative value");
        double th = deg * M_PI / 180.0;
        if (!theta.empty() && !(th > theta.back()))
            throw FormatError(path + ": row " + std::to_string(row) +
                              ": theta must be strictly ascending");
        theta.push_back(th);
        value.push_back(v);
    }
    if (theta.size() < 8)
        throw FormatError(path + ": phase table needs at least 8 rows");
    if (std::abs(theta.front()) > 1e-9 || std::abs(theta.back() - M_PI) > 1e-9)
        throw FormatError(path + ": table must cover 0 and 180 degrees");
    return PhaseFunction::tabulated(std::move(theta), std::move(value));
}

}  // namespace cloudnn
