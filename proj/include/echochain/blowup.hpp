#ifndef ECHOCHAIN_BLOWUP_HPP
#define ECHOCHAIN_BLOWUP_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "core_model.hpp"
#include "diagnostics.hpp"
#include "mode_system.hpp"
#include "parallel.hpp"

namespace echochain {

struct BlowupSpec {
    double sigma = 1.0;
    std::vector<double> eta_set;
    std::vector<double> psi;
    std::vector<double> rho_hat;
};

struct InflationOptions {
    double rtol = 1e-8;
    double atol = 1e-12;
    double margin = 0.2;  // t_end = (2 + margin) eta
    int L_min = 12;
    int L_pad = 4;
    int samples = 200;  // uniform norm samples on [0, t_end]
    bool require_viscous_condition = true;  // nu k3^2 >= 4
    WeightSpec weight;
    unsigned jobs = 1;
};

struct InflationRun {
    double eta = 0.0;
    int k2 = 0;
    int k3 = 0;
    int L = 0;
    double t_end = 0.0;
    bool viscous_condition = false;
    bool ok = false;
    std::string error;
    double psi = 0.0;
    std::vector<double> times;
    std::vector<double> theta_norm;  // |theta(t)|_X / |theta(0)|_X
};

inline int blowup_mode_count(double c, double eta, const InflationOptions& o) {
    return std::max(o.L_min, resonant_mode_count_bound(c, eta) + o.L_pad);
}

inline InflationRun inflation_run(double c, double nu, double eta, const InflationOptions& o) {
    InflationRun r;
    r.eta = eta;
    r.t_end = (2.0 + o.margin) * eta;
    try {
        if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
        const bool degenerate = c == 0.0;
        const PhysicalParams p = degenerate ? make_params_unchecked(nu, 0.0) : validate_params({nu, c, 0.0});
        if (!degenerate && c * eta * pi < 1.0) throw ConfigError("c eta pi < 1: no resonant regime");
        const RegimeThresholds th = thresholds(c, eta);
        r.k2 = std::max(1, th.k2);
        r.k3 = std::max(1, th.k3);
        r.viscous_condition = nu * r.k3 * r.k3 >= 4.0;
        if (!degenerate && o.require_viscous_condition && !r.viscous_condition)
            throw ConfigError("nu k3^2 < 4 at eta = " + std::to_string(eta));
        r.L = degenerate ? std::max(o.L_min, r.k2 + 2) : blowup_mode_count(c, eta, o);

        SimConfig cfg;
        cfg.eta = eta;
        cfg.L = r.L;
        cfg.t_start = 0.0;
        cfg.t_end = r.t_end;
        cfg.rtol = o.rtol;
        cfg.atol = o.atol;
        cfg.init.mode = r.k2;
        for (int i = 1; i < o.samples; ++i) cfg.sample_times.push_back(r.t_end * i / o.samples);
        const Trajectory tr = integrate(cfg, p, initial_state(cfg));
        const double n0 = norm_X(tr.samples.front().theta, o.weight);
        for (const auto& s : tr.samples) {
            r.times.push_back(s.t);
            r.theta_norm.push_back(norm_X(s.theta, o.weight) / n0);
        }
        r.psi = r.theta_norm.back();
        r.ok = true;
    } catch (const Error& e) {
        r.error = e.what();
    }
    return r;
}

// One run per eta, concurrently; failures are recorded per entry.
inline std::vector<InflationRun> inflation_profile(double c, double nu, const std::vector<double>& eta_set,
                                                   const InflationOptions& o) {
    for (std::size_t i = 1; i < eta_set.size(); ++i)
        if (!(eta_set[i] > eta_set[i - 1])) throw ConfigError("eta_set must be strictly increasing");
    return parallel_map<InflationRun>(eta_set.size(), o.jobs,
                                      [&](std::size_t i) { return inflation_run(c, nu, eta_set[i], o); });
}

// In H^sigma, and in no H^s with s > sigma.
inline double rho_hat(double sigma, double eta) {
    return std::pow(1.0 + eta, -sigma - 0.5) / std::log(2.0 + eta);
}

inline std::vector<double> compose_initial_data(double sigma, const std::vector<double>& eta_set,
                                                const std::vector<double>& psi) {
    if (psi.size() != eta_set.size()) throw ConfigError("psi must have one entry per eta");
    std::vector<double> a(eta_set.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(psi[i] > 0.0)) throw ConfigError("psi must be positive");
        a[i] = rho_hat(sigma, eta_set[i]) / psi[i];
    }
    return a;
}

// Linear interpolation, held at the end values outside the sampled range.
inline double interpolate_held(const std::vector<double>& x, const std::vector<double>& y, double t) {
    if (t <= x.front()) return y.front();
    if (t >= x.back()) return y.back();
    const auto it = std::upper_bound(x.begin(), x.end(), t);
    const std::size_t j = static_cast<std::size_t>(it - x.begin());
    const double w = (t - x[j - 1]) / (x[j] - x[j - 1]);
    return (1.0 - w) * y[j - 1] + w * y[j];
}

struct SobolevSeries {
    double s = 0.0;
    std::vector<double> times;
    std::vector<double> values;
    double growth() const { return values.back() / values.front(); }
};

// N_s(t) on a shared grid; each run's norm history is interpolated onto it and frozen past its horizon.
inline SobolevSeries sobolev_trajectory(double s, const std::vector<InflationRun>& runs,
                                        const std::vector<double>& amplitudes, const std::vector<double>& grid) {
    if (runs.empty()) throw ConfigError("sobolev_trajectory: empty eta set");
    if (amplitudes.size() != runs.size()) throw ConfigError("sobolev_trajectory: one amplitude per run");
    SobolevSeries out;
    out.s = s;
    out.times = grid;
    out.values.assign(grid.size(), 0.0);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        if (!r.ok) throw ConfigError("sobolev_trajectory: run at eta = " + std::to_string(r.eta) + " failed");
        const double w = std::pow(1.0 + r.eta * r.eta, s) * amplitudes[i] * amplitudes[i];
        for (std::size_t n = 0; n < grid.size(); ++n) {
            const double v = interpolate_held(r.times, r.theta_norm, grid[n]);
            out.values[n] += w * v * v;
        }
    }
    for (auto& v : out.values) v = std::sqrt(v);
    return out;
}

inline std::vector<double> common_grid(const std::vector<InflationRun>& runs, int n = 401) {
    double hi = 0.0;
    for (const auto& r : runs)
        if (r.ok) hi = std::max(hi, r.t_end);
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = hi * i / (n - 1);
    return g;
}

}  // namespace echochain

#endif
