#ifndef ECHOCHAIN_CLI_HPP
#define ECHOCHAIN_CLI_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "blowup.hpp"
#include "config.hpp"
#include "diagnostics.hpp"
#include "io.hpp"
#include "mode_system.hpp"
#include "parallel.hpp"
#include "wave_dynamics.hpp"

namespace echochain {

struct RunOptions {
    std::filesystem::path out = "out";
    unsigned jobs = 1;
    std::uint64_t seed = 0;  // recorded only; no command draws random numbers
};

struct CommandResult {
    bool checks_passed = true;
    std::vector<std::filesystem::path> files;
};

namespace detail {

inline Json meta_json(const RunConfig& rc, const RunOptions& ro) {
    return Json{{"command", command_name(rc.command)},
                {"config", rc.source.string()},
                {"jobs", ro.jobs},
                {"seed", ro.seed},
                {"timestamp", utc_timestamp()}};
}

inline Json sim_json(const SimConfig& s) {
    const char* src = s.f_source == FSource::ode ? "ode" : s.f_source == FSource::decay_bound ? "decay_bound" : "zero";
    return Json{{"eta", s.eta},       {"L", s.L},       {"t_start", s.t_start}, {"t_end", s.t_end},
                {"rtol", s.rtol},     {"atol", s.atol}, {"f_source", src},      {"g_forcing_per_l", s.g_forcing_per_l},
                {"init_mode", s.init.mode}};
}

inline Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json bound_json(const BoundCheck& b) {
    return Json{{"name", b.name}, {"worst_ratio", b.worst_ratio}, {"at_time", b.at_time}, {"k", b.k}, {"pass", b.pass()}};
}

inline const char* branch_name(Branch b) { return b == Branch::plus ? "+" : "-"; }

}  // namespace detail

// ---------------------------------------------------------------- wave

inline CommandResult cmd_wave(const RunConfig& rc, const RunOptions& ro) {
    const auto& w = rc.wave;
    if (w.points < 1) throw ConfigError("wave.points must be >= 1");
    if (!(w.t_max > w.t_min)) throw ConfigError("wave.t_max must exceed wave.t_min");
    std::vector<double> grid;
    if (w.log_grid) {
        if (!(w.t_min > 0.0)) throw ConfigError("log wave grid needs t_min > 0");
        if (w.points < 2) throw ConfigError("log wave grid needs at least 2 points");
        grid = log_grid(w.t_min, w.t_max, w.points);
    } else {
        for (int i = 0; i < w.points; ++i)
            grid.push_back(w.points == 1 ? w.t_max : w.t_min + (w.t_max - w.t_min) * i / (w.points - 1));
    }
    const auto traj = solve_wave_ode(rc.params, w.k, w.f0, w.g0, grid);

    CommandResult res;
    CsvTable csv({"t", "f", "g"});
    for (const auto& s : traj) csv.row({fmt17(s.t), fmt17(s.f), fmt17(s.g)});
    write_atomic(ro.out / "wave.csv", csv.str());
    res.files.push_back(ro.out / "wave.csv");

    Json j{{"schema", "echochain.wave/1"}, {"params", params_json(rc.params)}, {"k", w.k}, {"f0", w.f0}, {"g0", w.g0}};
    if (rc.params.alpha == 0.0 && w.g0 != 0.0) {
        const double ratio = verify_f_bound(traj, rc.params, w.f0, w.g0);
        j["f_bound"] = {{"worst_ratio", ratio}, {"pass", ratio <= 1.0 + 1e-6}};
    } else {
        j["f_bound"] = nullptr;
    }
    Json fits = Json::array();
    for (double a : w.fit_alphas) {
        const double fitted = inviscid_fit(a, w.fit_t_lo, w.fit_t_hi);
        const double predicted = 0.5 + inviscid_exponent(a);
        fits.push_back({{"alpha", a}, {"fitted", fitted}, {"predicted", predicted}, {"pass", std::abs(fitted - predicted) <= 0.05}});
    }
    j["inviscid_fits"] = fits;
    j["meta"] = detail::meta_json(rc, ro);
    write_json(ro.out / "wave_summary.json", j);
    res.files.push_back(ro.out / "wave_summary.json");
    return res;
}

// ---------------------------------------------------------------- simulate

inline CommandResult cmd_simulate(const RunConfig& rc, const RunOptions& ro) {
    const Trajectory tr = integrate(rc.sim, rc.params, initial_state(rc.sim));
    CommandResult res;
    write_atomic(ro.out / "trajectory.csv", trajectory_csv(tr));
    Json j{{"schema", "echochain.run/1"},
           {"params", params_json(rc.params)},
           {"sim", detail::sim_json(rc.sim)},
           {"samples", tr.samples.size()},
           {"steps", stats_json(tr.meta)},
           {"meta", detail::meta_json(rc, ro)}};
    write_json(ro.out / "run.json", j);
    res.files = {ro.out / "trajectory.csv", ro.out / "run.json"};
    return res;
}

// ---------------------------------------------------------------- echo report

// Dense samples on I_k for the bootstrap integrals, plus the evaluation times.
inline Trajectory bootstrap_run(const RunConfig& rc, int k, const std::vector<double>& at) {
    SimConfig cfg = rc.sim;
    cfg.t_start = resonant_time(cfg.eta, k);
    cfg.t_end = resonant_time(cfg.eta, k - 1);
    cfg.init = InitSpec{};
    cfg.init.mode = k;
    cfg.rtol = std::min(cfg.rtol, 1e-10);
    cfg.atol = std::min(cfg.atol, 1e-16);
    cfg.sample_times = at;
    const double a = cfg.t_start, b = cfg.t_end, peak = cfg.eta / k;
    for (int i = 1; i < 4000; ++i) cfg.sample_times.push_back(a + (b - a) * i / 4000.0);
    for (double t = peak - 20.0; t <= peak + 20.0; t += 0.02)
        if (t > a && t < b) cfg.sample_times.push_back(t);
    std::sort(cfg.sample_times.begin(), cfg.sample_times.end());
    return integrate(cfg, rc.params, initial_state(cfg));
}

inline CommandResult cmd_echo_report(const RunConfig& rc, const RunOptions& ro) {
    const auto& s = rc.sim;
    if (s.t_end < 2.0 * s.eta) throw ConfigError("echo-report needs t_end >= 2 eta");
    const Trajectory tr = integrate(s, rc.params, initial_state(s));
    const ChainReport chain = chain_report(tr, rc.params, rc.weight);
    const RegimeThresholds th = thresholds(rc.params.c, s.eta, rc.factors, s.L);

    CommandResult res;
    Json j{{"schema", "echochain.chain/1"}, {"params", params_json(rc.params)}, {"sim", detail::sim_json(s)},
           {"thresholds", thresholds_json(th)}};
    Json recs = Json::array();
    CsvTable csv({"k", "t_k", "gain_minus", "gain_plus", "predicted", "dominant_mode"});
    for (const auto& r : chain.records) {
        recs.push_back({{"k", r.k}, {"t_k", r.t_k}, {"gain_minus", detail::opt_json(r.gain_minus)},
                        {"gain_plus", detail::opt_json(r.gain_plus)}, {"predicted", r.predicted},
                        {"dominant_mode", r.dominant_mode}});
        csv.row({std::to_string(r.k), fmt17(r.t_k), r.gain_minus ? fmt17(*r.gain_minus) : "",
                 r.gain_plus ? fmt17(*r.gain_plus) : "", fmt17(r.predicted), std::to_string(r.dominant_mode)});
    }
    j["records"] = recs;
    j["skipped_k"] = chain.skipped;
    j["total_inflation"] = chain.total_inflation;
    j["G_inflation"] = chain.G_inflation;
    j["G_inflation_reference"] = chain.G_inflation_vs_theta0 ? "theta0" : "G0";
    const double cr = std::cbrt(rc.params.c * s.eta);
    j["inflation_window"] = {{"lower", std::exp(cr)}, {"upper", std::exp(50.0 * cr)},
                             {"pass", chain.total_inflation >= std::exp(cr) && chain.total_inflation <= std::exp(50.0 * cr)}};

    Json stab = Json::array();
    stab.push_back(detail::bound_json(intermediate_check(tr, rc.weight)));
    stab.push_back(detail::bound_json(resonant_upper_check(tr, rc.weight)));
    if (s.t_end > 2.0 * s.eta) stab.push_back(detail::bound_json(freeze_check(tr, rc.weight)));
    j["stability"] = stab;

    if (th.k3 >= 1 && th.k3 + 2 <= s.L && tr.find(resonant_time(s.eta, th.k3))) {
        try {
            const auto p = persistence_check(tr, th.k3);
            j["persistence"] = {{"mode", p.mode}, {"reference", p.reference}, {"min_ratio", p.min_ratio},
                                {"t_min", p.t_min}, {"precondition", p.precondition},
                                {"pass", p.min_ratio >= std::exp(-2.0)}};
        } catch (const NumericalError& e) {
            j["persistence"] = {{"error", e.what()}};
        }
    }

    const int bk = rc.echo.bootstrap_k.value_or(0);
    if (bk >= 1) {
        if (bk + 1 > s.L) throw ConfigError("echo.bootstrap_k must be < L");
        const double a = resonant_time(s.eta, bk), b = resonant_time(s.eta, bk - 1);
        std::vector<double> at;
        for (int i = 0; i <= rc.echo.bootstrap_points; ++i) at.push_back(a + (b - a) * i / rc.echo.bootstrap_points);
        const Trajectory bt = bootstrap_run(rc, bk, at);
        const BootstrapReport br = bootstrap_check(bt, bk, at);
        Json rows = Json::array();
        for (const auto& r : br.records) {
            Json row{{"T", r.T}};
            for (const auto& q : r.B)
                row[q.name] = {{"holds", q.holds}, {"slack", q.slack}, {"bound", q.bound}, {"worst_mode", q.worst_mode}};
            rows.push_back(row);
        }
        j["bootstrap"] = {{"k", bk}, {"g_forcing_per_l", br.g_forcing_per_l}, {"records", rows}};
    }
    j["steps"] = stats_json(tr.meta);
    j["meta"] = detail::meta_json(rc, ro);

    write_json(ro.out / "chain_report.json", j);
    write_atomic(ro.out / "chain.csv", csv.str());
    res.files = {ro.out / "chain_report.json", ro.out / "chain.csv"};
    if (rc.echo.write_trajectory) {
        write_atomic(ro.out / "trajectory.csv", trajectory_csv(tr));
        res.files.push_back(ro.out / "trajectory.csv");
    }
    return res;
}

// ---------------------------------------------------------------- sweep

struct SweepPoint {
    double eta = 0.0;
    int k0 = 0;
    int init_mode = 0;
    int L = 0;
    bool ok = false;
    double inflation = 0.0;
    std::string error;
};

inline SweepPoint sweep_point(const RunConfig& rc, double eta) {
    SweepPoint pt;
    pt.eta = eta;
    const double c = rc.params.c;
    const RegimeThresholds th = thresholds(c, eta, rc.factors);
    pt.k0 = th.k0;
    try {
        if (rc.sweep.synthetic_slope) {
            pt.inflation = std::exp(*rc.sweep.synthetic_slope * std::cbrt(c * eta) + rc.sweep.synthetic_intercept);
            pt.ok = true;
            return pt;
        }
        if (th.all_stable) throw ConfigError("c eta pi < 1 at eta = " + std::to_string(eta));
        pt.init_mode = rc.sweep.init_at == "k2" ? th.k2 : th.k0;
        pt.L = std::max(rc.sweep.L_min, resonant_mode_count_bound(c, eta) + rc.sweep.L_pad);
        SimConfig cfg;
        cfg.eta = eta;
        cfg.L = pt.L;
        cfg.t_start = 0.0;
        cfg.t_end = 2.0 * eta;
        cfg.rtol = rc.sim.rtol;
        cfg.atol = rc.sim.atol;
        cfg.f_source = rc.sim.f_source;
        cfg.g_forcing_per_l = rc.sim.g_forcing_per_l;
        cfg.init.mode = pt.init_mode;
        const Trajectory tr = integrate(cfg, rc.params, initial_state(cfg));
        pt.inflation = norm_X(tr.samples.back().theta, rc.weight) / norm_X(tr.samples.front().theta, rc.weight);
        pt.ok = true;
    } catch (const Error& e) {
        pt.error = e.what();
    }
    return pt;
}

inline std::vector<double> sweep_etas(const RunConfig& rc) {
    std::vector<double> etas = rc.sweep.eta;
    for (int k0 : rc.sweep.k0) {
        if (k0 < 1) throw ConfigError("sweep.k0 entries must be >= 1");
        // centre of the k0 band: floor(cbrt(c eta pi)) = k0
        etas.push_back(std::pow(k0 + 0.5, 3) / (rc.params.c * pi));
    }
    std::sort(etas.begin(), etas.end());
    for (std::size_t i = 0; i < etas.size(); ++i) {
        if (!(etas[i] > 0.0)) throw ConfigError("sweep eta values must be > 0");
        if (i && etas[i] == etas[i - 1]) throw ConfigError("sweep eta values must be distinct");
    }
    return etas;
}

inline CommandResult cmd_sweep(const RunConfig& rc, const RunOptions& ro) {
    const auto etas = sweep_etas(rc);
    const auto pts = parallel_map<SweepPoint>(etas.size(), ro.jobs, [&](std::size_t i) { return sweep_point(rc, etas[i]); });

    CsvTable csv({"eta", "c_eta", "k0", "init_mode", "L", "inflation", "status"});
    std::vector<std::pair<double, double>> fit_pts;
    std::size_t failed = 0;
    for (const auto& p : pts) {
        csv.row({fmt17(p.eta), fmt17(rc.params.c * p.eta), std::to_string(p.k0), std::to_string(p.init_mode),
                 std::to_string(p.L), p.ok ? fmt17(p.inflation) : "", p.ok ? "ok" : "failed"});
        if (p.ok) fit_pts.emplace_back(rc.params.c * p.eta, p.inflation);
        else ++failed;
    }
    CommandResult res;
    write_atomic(ro.out / "sweep.csv", csv.str());
    res.files.push_back(ro.out / "sweep.csv");
    if (5 * failed > pts.size()) throw NumericalError(std::to_string(failed) + " of " + std::to_string(pts.size()) + " sweep jobs failed", 0.0);

    const FitReport fit = fit_cube_root(fit_pts);
    Json regs = Json::array();
    for (const auto& r : fit.regressors)
        regs.push_back({{"exponent", r.exponent}, {"slope", r.fit.slope}, {"intercept", r.fit.intercept}, {"r_squared", r.fit.r_squared}});
    Json failures = Json::array();
    for (const auto& p : pts)
        if (!p.ok) failures.push_back({{"eta", p.eta}, {"error", p.error}});
    Json j{{"schema", "echochain.fit/1"},
           {"params", params_json(rc.params)},
           {"synthetic", rc.sweep.synthetic_slope.has_value()},
           {"points", fit_pts.size()},
           {"regressors", regs},
           {"winner_exponent", fit.regressors[static_cast<std::size_t>(fit.winner)].exponent},
           {"cube_root_wins", fit.cube_root_wins()},
           {"failures", failures},
           {"meta", detail::meta_json(rc, ro)}};
    write_json(ro.out / "fit_report.json", j);
    res.files.push_back(ro.out / "fit_report.json");
    return res;
}

// ---------------------------------------------------------------- blowup

struct BlowupResult {
    std::vector<InflationRun> runs;
    std::vector<double> eta_ok;
    std::vector<double> amplitudes;
    std::vector<SobolevSeries> series;  // s = sigma - 1, sigma, sigma + 1
};

inline BlowupResult run_blowup(double c, double nu, const BlowupBlock& b, const WeightSpec& w, double rtol, double atol,
                               unsigned jobs) {
    InflationOptions o;
    o.rtol = rtol;
    o.atol = atol;
    o.margin = b.margin;
    o.samples = b.samples;
    o.L_min = b.L_min;
    o.L_pad = b.L_pad;
    o.require_viscous_condition = b.require_viscous_condition;
    o.weight = w;
    o.jobs = jobs;
    BlowupResult r;
    r.runs = inflation_profile(c, nu, b.eta, o);
    std::vector<InflationRun> ok;
    std::vector<double> psi;
    for (const auto& run : r.runs)
        if (run.ok) {
            ok.push_back(run);
            r.eta_ok.push_back(run.eta);
            psi.push_back(run.psi);
        }
    if (ok.empty()) throw NumericalError("every blow-up run failed", 0.0);
    r.amplitudes = compose_initial_data(b.sigma, r.eta_ok, psi);
    const auto grid = common_grid(ok, b.grid_points);
    for (double s : {b.sigma - 1.0, b.sigma, b.sigma + 1.0}) r.series.push_back(sobolev_trajectory(s, ok, r.amplitudes, grid));
    return r;
}

inline CommandResult cmd_blowup(const RunConfig& rc, const RunOptions& ro) {
    const auto& b = rc.blowup;
    const BlowupResult r = run_blowup(rc.params.c, rc.params.nu, b, rc.weight, rc.sim.rtol, rc.sim.atol, ro.jobs);

    CsvTable psi({"eta", "k2", "k3", "L", "t_end", "viscous_condition", "psi", "status"});
    for (const auto& run : r.runs)
        psi.row({fmt17(run.eta), std::to_string(run.k2), std::to_string(run.k3), std::to_string(run.L), fmt17(run.t_end),
                 run.viscous_condition ? "1" : "0", run.ok ? fmt17(run.psi) : "", run.ok ? "ok" : "failed"});
    CsvTable ns({"t", "N_sigma_minus_1", "N_sigma", "N_sigma_plus_1"});
    for (std::size_t n = 0; n < r.series[0].times.size(); ++n)
        ns.row({fmt17(r.series[0].times[n]), fmt17(r.series[0].values[n]), fmt17(r.series[1].values[n]), fmt17(r.series[2].values[n])});

    Json amps = Json::array();
    for (std::size_t i = 0; i < r.eta_ok.size(); ++i) {
        const double budget = r.amplitudes[i] * std::exp(std::cbrt(rc.params.c * r.eta_ok[i]));
        amps.push_back({{"eta", r.eta_ok[i]}, {"rho_hat", rho_hat(b.sigma, r.eta_ok[i])}, {"amplitude", r.amplitudes[i]},
                        {"gevrey_budget", budget}});
    }
    Json growth = Json::array();
    for (const auto& s : r.series) growth.push_back({{"s", s.s}, {"ratio", s.growth()}});
    const double g0 = r.series[0].growth(), g1 = r.series[1].growth(), g2 = r.series[2].growth();
    Json failures = Json::array();
    for (const auto& run : r.runs)
        if (!run.ok) failures.push_back({{"eta", run.eta}, {"error", run.error}});
    Json j{{"schema", "echochain.blowup/1"},
           {"params", params_json(rc.params)},
           {"sigma", b.sigma},
           {"margin", b.margin},
           {"viscous_condition", "nu * k3^2 >= 4"},
           {"amplitudes", amps},
           {"growth", growth},
           {"strictly_increasing", g0 < g1 && g1 < g2},
           {"top_over_bottom", g2 / g0},
           {"failures", failures},
           {"meta", detail::meta_json(rc, ro)}};
    write_atomic(ro.out / "psi.csv", psi.str());
    write_atomic(ro.out / "sobolev.csv", ns.str());
    write_json(ro.out / "blowup.json", j);
    CommandResult res;
    res.files = {ro.out / "psi.csv", ro.out / "sobolev.csv", ro.out / "blowup.json"};
    return res;
}

// ---------------------------------------------------------------- check-coeffs

inline CommandResult cmd_check_coeffs(const RunConfig& rc, const RunOptions& ro) {
    const double c = rc.params.c, nu = rc.params.nu, eta = rc.sim.eta;
    if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
    std::vector<int> ks = rc.check_coeffs.k;
    if (ks.empty()) {
        const RegimeThresholds th = thresholds(c, eta, rc.factors);
        for (int k = 1; k <= std::max(1, th.k0); ++k) ks.push_back(k);
    }
    const auto tables = parallel_map<std::vector<CoefficientRow>>(
        ks.size(), ro.jobs, [&](std::size_t i) { return coefficient_table(ks[i], c, nu, eta, rc.check_coeffs.window); });

    CsvTable csv({"k", "family", "l", "branch", "value", "bound", "lower", "slack", "evaluated", "pass", "note"});
    bool all = true;
    std::size_t failed = 0;
    for (const auto& rows : tables)
        for (const auto& r : rows) {
            csv.row({std::to_string(r.k), r.family, std::to_string(r.l), detail::branch_name(r.branch), fmt17(r.value),
                     fmt17(r.bound), r.lower ? fmt17(*r.lower) : "", fmt17(r.slack()), r.evaluated ? "1" : "0",
                     r.pass() ? "1" : "0", r.note});
            if (!r.pass()) {
                all = false;
                ++failed;
            }
        }
    double e1 = 0.0, e2 = 0.0;
    const double v1 = lorentzian_line_integral(1, &e1), v2 = lorentzian_line_integral(2, &e2);
    const bool golden = std::abs(v1 - pi) <= 1e-8 && std::abs(v2 - pi / 2.0) <= 1e-8;
    Json j{{"schema", "echochain.coeffs/1"},
           {"params", params_json(rc.params)},
           {"eta", eta},
           {"k", ks},
           {"golden", {{"lorentzian", v1}, {"lorentzian_squared", v2}, {"pass", golden}}},
           {"failed_rows", failed},
           {"pass", all && golden},
           {"meta", detail::meta_json(rc, ro)}};
    write_atomic(ro.out / "coeffs.csv", csv.str());
    write_json(ro.out / "coeffs.json", j);
    CommandResult res;
    res.checks_passed = all && golden;
    res.files = {ro.out / "coeffs.csv", ro.out / "coeffs.json"};
    return res;
}

inline CommandResult run_command(const RunConfig& rc, const RunOptions& ro) {
    switch (rc.command) {
    case Command::wave: return cmd_wave(rc, ro);
    case Command::simulate: return cmd_simulate(rc, ro);
    case Command::echo_report: return cmd_echo_report(rc, ro);
    case Command::sweep: return cmd_sweep(rc, ro);
    case Command::blowup: return cmd_blowup(rc, ro);
    case Command::check_coeffs: return cmd_check_coeffs(rc, ro);
    }
    throw ConfigError("unknown command");
}

}  // namespace echochain

#endif
