#ifndef ECHOCHAIN_WAVE_DYNAMICS_HPP
#define ECHOCHAIN_WAVE_DYNAMICS_HPP

#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "core_model.hpp"
#include "etd.hpp"

namespace echochain {

struct WaveState {
    double t = 0.0;
    double f = 0.0;
    double g = 0.0;
    int k_wave = 1;
};

inline std::pair<double, double> wave_ode_rhs(double t, double f, double g, const PhysicalParams& p, int k) {
    const double kk = static_cast<double>(k) * k;
    const double s = kk + kk * t * t;
    return {-p.nu * s * f - k * g, p.alpha / s * f};
}

namespace detail {

// y = (f, g); the viscous part of df is left to the exponential integrator
struct WaveSystem {
    PhysicalParams p;
    int k = 1;

    std::size_t size() const { return 2; }
    etd::QuadraticDecay decay(std::size_t i) const {
        if (i == 0) return {p.nu, static_cast<double>(k), 0.0};
        return {};
    }
    double step_cap(double) const { return std::numeric_limits<double>::infinity(); }
    void nonstiff(double t, std::span<const complex> y, std::span<complex> dy) const {
        const double kk = static_cast<double>(k) * k;
        dy[0] = -static_cast<double>(k) * y[1];
        dy[1] = (p.alpha == 0.0) ? complex{} : p.alpha / (kk + kk * t * t) * y[0];
    }
};

}  // namespace detail

struct WaveOptions {
    double rtol = 1e-11;
    double atol = 1e-15;
};

// Initial data (f0, g0) is posed at t = 0.
inline std::vector<WaveState> solve_wave_ode(const PhysicalParams& p, int k_wave, double f0, double g0,
                                             const std::vector<double>& grid, const WaveOptions& wo = {}) {
    if (k_wave < 1) throw ConfigError("k_wave must be >= 1");
    if (grid.empty()) throw ConfigError("wave grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(grid[i]) || grid[i] < 0.0) throw ConfigError("wave grid times must be finite and >= 0");
        if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("wave grid must be strictly increasing");
    }
    const detail::WaveSystem sys{p, k_wave};
    etd::KrogstadStepper stepper(sys);
    etd::Options opt{wo.rtol, wo.atol};
    etd::StepStats stats;
    std::vector<complex> y{complex{f0}, complex{g0}};
    double t = 0.0, h = 1e-3;
    std::vector<WaveState> out;
    out.reserve(grid.size());
    for (double tg : grid) {
        if (tg > t) {
            stepper.advance(t, tg, y, h, opt, stats);
            t = tg;
        }
        const double f = y[0].real();
        const double g = (p.alpha == 0.0) ? g0 : y[1].real();
        if (!std::isfinite(f) || !std::isfinite(g)) throw NumericalError("wave state is not finite", tg);
        out.push_back({tg, f, g, k_wave});
    }
    return out;
}

// f(t) = e^{-nu(t+t^3/3)} f0 - g0 int_0^t e^{-nu(t-s+(t^3-s^3)/3)} ds
inline double duhamel_f(double nu, double f0, double g0, double t) {
    if (!(nu > 0.0)) throw ConfigError("duhamel_f requires nu > 0");
    if (t < 0.0) throw ConfigError("duhamel_f requires t >= 0");
    if (t == 0.0) return f0;
    // exponent as a function of the lag u = t - s; t^3 - s^3 = u (t^2 + t s + s^2)
    auto expo = [&](double u) {
        const double s = t - u;
        return nu * (u + u * (t * t + t * s + s * s) / 3.0);
    };
    const double homogeneous = std::exp(-expo(t)) * f0;
    if (g0 == 0.0) return homogeneous;

    // break the lag axis where the exponent crosses a few levels
    std::vector<double> edges{0.0};
    for (double level : {1.0, 4.0, 16.0, 64.0}) {
        if (expo(t) <= level) break;
        double lo = edges.back(), hi = t;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * t; ++it) {
            const double mid = 0.5 * (lo + hi);
            (expo(mid) > level ? hi : lo) = mid;
        }
        edges.push_back(0.5 * (lo + hi));
    }
    if (expo(t) <= 64.0) edges.push_back(t);

    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        double err = 0.0;
        integral += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            [&](double u) { return std::exp(-expo(u)); }, edges[i], edges[i + 1], 15, 1e-12, &err);
        if (!std::isfinite(integral)) throw NumericalError("duhamel quadrature failed", t, err);
    }
    return homogeneous - g0 * integral;
}

inline double f_bound_ratio_at(const WaveState& s, const PhysicalParams& p, double f0, double g0) {
    const double hom = std::exp(-p.nu * (s.t + s.t * s.t * s.t / 3.0)) * f0;
    return std::abs(s.f - hom) * p.nu * (1.0 + s.t * s.t) / (4.0 * std::abs(g0));
}

inline double verify_f_bound(const std::vector<WaveState>& traj, const PhysicalParams& p, double f0, double g0) {
    if (g0 == 0.0) throw ConfigError("verify_f_bound: g0 = 0 makes the bound degenerate");
    if (p.alpha != 0.0) throw ConfigError("verify_f_bound requires alpha = 0");
    if (!(p.nu > 0.0)) throw ConfigError("verify_f_bound requires nu > 0");
    double worst = 0.0;
    for (const auto& s : traj) worst = std::max(worst, f_bound_ratio_at(s, p, f0, g0));
    return worst;
}

inline double inviscid_exponent(double alpha) {
    const double r = 0.25 - alpha;
    return r > 0.0 ? std::sqrt(r) : 0.0;
}

// Amplitude used for exponent fits: |f| when alpha <= 1/4. Above 1/4 the solution
// oscillates like t^{1/2} cos(w log t), and the envelope sqrt(f^2 + ((t f' - f/2)/w)^2)
// removes the oscillation exactly for the limiting Euler equation.
inline double wave_amplitude(const WaveState& s, double alpha) {
    if (alpha <= 0.25) return std::abs(s.f);
    const double w = std::sqrt(alpha - 0.25);
    const double fp = -static_cast<double>(s.k_wave) * s.g;
    const double q = (s.t * fp - 0.5 * s.f) / w;
    return std::sqrt(s.f * s.f + q * q);
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = (syy == 0.0) ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
    return f;
}

inline double fit_power_law(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 8) throw ConfigError("fit_power_law needs at least 8 samples");
    for (const auto& [t, v] : samples)
        if (!(t > 0.0) || !(v > 0.0)) throw ConfigError("fit_power_law needs positive times and values");
    std::vector<double> x, y;
    for (std::size_t i = samples.size() / 2; i < samples.size(); ++i) {
        x.push_back(std::log(samples[i].first));
        y.push_back(std::log(samples[i].second));
    }
    return least_squares(x, y).slope;
}

inline std::vector<double> log_grid(double a, double b, int n) {
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = a * std::pow(b / a, static_cast<double>(i) / (n - 1));
    g.back() = b;
    return g;
}

// Fitted growth exponent of the inviscid wave with f0 = 0, g0 = 1 on [t_lo, t_hi].
inline double inviscid_fit(double alpha, double t_lo = 1e2, double t_hi = 1e4, int n = 64) {
    const PhysicalParams p = make_params_unchecked(0.0, 0.0, alpha);
    const auto traj = solve_wave_ode(p, 1, 0.0, 1.0, log_grid(t_lo, t_hi, n));
    std::vector<std::pair<double, double>> pts;
    for (const auto& s : traj) pts.emplace_back(s.t, wave_amplitude(s, alpha));
    return fit_power_law(pts);
}

}  // namespace echochain

#endif
