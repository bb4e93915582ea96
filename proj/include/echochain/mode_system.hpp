#ifndef ECHOCHAIN_MODE_SYSTEM_HPP
#define ECHOCHAIN_MODE_SYSTEM_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "core_model.hpp"
#include "etd.hpp"
#include "wave_dynamics.hpp"

namespace echochain {

enum class Branch { plus, minus };

struct CoefficientQuery {
    int l = 1;
    Branch branch = Branch::plus;
    double t = 0.0;
    double c = 0.0;
    double eta = 0.0;

    int neighbour() const { return branch == Branch::plus ? l + 1 : l - 1; }
};

inline double lorentzian(double s) { return 1.0 / (1.0 + s * s); }

inline double coeff_c(const CoefficientQuery& q) {
    const int m = q.neighbour();
    if (m <= 0) return 0.0;
    const double md = m, lor = lorentzian(q.eta / md - q.t);
    return q.c * q.eta / (md * md * md) * lor * lor;
}

inline double coeff_d(const CoefficientQuery& q) {
    const int m = q.neighbour();
    if (m <= 0) return 0.0;
    const double md = m;
    return q.c * q.eta / (md * md * md) * lorentzian(q.eta / md - q.t);
}

inline double dissipation_exponent(int l, double t0, double t1, double nu, double eta) {
    return etd::QuadraticDecay{nu, static_cast<double>(l), eta}.exponent(t0, t1);
}

// Coefficient of theta_l in dG_l.
inline double g_forcing(int l, double t, double eta, bool per_l) {
    const double s = eta / l - t, lor = lorentzian(s);
    return (per_l ? 2.0 / l : 2.0) * s * lor * lor;
}

namespace detail {

// Coupling kernels with the factor c stripped: kc[m] = eta/m^3 lor^2, kd[m] = eta/m^3 lor
// at the neighbour index m; kc[0] = kc[L+1] = 0 absorb the out-of-range terms.
inline void coupling_kernels(double t, double eta, int L, std::vector<double>& kc, std::vector<double>& kd) {
    kc.assign(static_cast<std::size_t>(L + 2), 0.0);
    kd.assign(static_cast<std::size_t>(L + 2), 0.0);
    for (int m = 1; m <= L; ++m) {
        const double md = m, lor = lorentzian(eta / md - t), base = eta / (md * md * md);
        kc[static_cast<std::size_t>(m)] = base * lor * lor;
        kd[static_cast<std::size_t>(m)] = base * lor;
    }
}

// Everything except the diagonal decay of G. theta, G, dtheta, dG are indexed l-1.
template <class In, class Out>
inline void coupling_rhs(double t, const In& theta, const In& G, double f, double c, double eta, int L,
                         bool per_l, std::vector<double>& kc, std::vector<double>& kd, Out& dtheta, Out& dG) {
    coupling_kernels(t, eta, L, kc, kd);
    const complex I{0.0, 1.0};
    auto th = [&](int l) { return (l >= 1 && l <= L) ? complex(theta[l - 1]) : complex{}; };
    auto gu = [&](int l) { return (l >= 1 && l <= L) ? complex(G[l - 1]) : complex{}; };
    for (int l = 1; l <= L; ++l) {
        const auto up = static_cast<std::size_t>(l + 1), dn = static_cast<std::size_t>(l - 1);
        const complex u_theta = kc[up] * th(l + 1) + kc[dn] * th(l - 1);
        const complex u_G = kd[up] * gu(l + 1) + kd[dn] * gu(l - 1);
        const complex coupled = c * (u_theta + u_G);
        dtheta[l - 1] = coupled;
        // f (nu/g) i l (c u_G + c u_theta) with nu c / g = 1/2
        dG[l - 1] = 0.5 * f * I * static_cast<double>(l) * (u_G + u_theta) + g_forcing(l, t, eta, per_l) * th(l) +
                    lorentzian(eta / l - t) * coupled;
    }
}

}  // namespace detail

inline ModeState rhs_full(double t, const ModeState& s, double f_t, const PhysicalParams& p, double eta,
                          bool per_l = false) {
    const int L = s.L();
    ModeState d(t, L);
    std::vector<double> kc, kd;
    detail::coupling_rhs(t, s.theta, s.G, f_t, p.c, eta, L, per_l, kc, kd, d.theta, d.G);
    for (int l = 1; l <= L; ++l) {
        const double r = eta - l * t;
        d.gu(l) -= p.nu * (static_cast<double>(l) * l + r * r) * s.gu(l);
    }
    return d;
}

inline std::vector<complex> rhs_model(double t, const std::vector<complex>& theta, double c, double eta) {
    const int L = static_cast<int>(theta.size());
    std::vector<double> kc, kd;
    detail::coupling_kernels(t, eta, L, kc, kd);
    std::vector<complex> d(theta.size());
    for (int l = 1; l <= L; ++l) {
        const complex up = (l < L) ? theta[static_cast<std::size_t>(l)] : complex{};
        const complex dn = (l > 1) ? theta[static_cast<std::size_t>(l - 2)] : complex{};
        d[static_cast<std::size_t>(l - 1)] = c * (kc[static_cast<std::size_t>(l + 1)] * up + kc[static_cast<std::size_t>(l - 1)] * dn);
    }
    return d;
}

inline complex good_unknown_forward(complex omega, complex theta, int l, double t, double nu, double eta) {
    const double ld = l, r = eta - ld * t;
    return complex{0.0, nu * ld} * omega + (ld * ld / (ld * ld + r * r)) * theta;
}

inline complex good_unknown_inverse(complex G, complex theta, int l, double t, double nu, double eta) {
    if (nu == 0.0) throw ConfigError("good_unknown_inverse requires nu != 0");
    const double ld = l, r = eta - ld * t;
    return (G - (ld * ld / (ld * ld + r * r)) * theta) / complex{0.0, nu * ld};
}

inline complex stream_function(complex G, complex theta, int l, double t, double nu, double eta) {
    if (nu == 0.0) throw ConfigError("stream_function requires nu != 0");
    const double ld = l, r = eta - ld * t, q = ld * ld + r * r;
    const complex I{0.0, 1.0};
    return (-G / (I * ld * q) + I * ld * theta / (q * q)) / nu;
}

// Step-size cap: fine near every critical time eta/k, coarse elsewhere, and never
// stepping over the start of the next resonance window.
class ResonanceCaps {
public:
    ResonanceCaps(double eta, int L) : far_cap_(std::min(0.5 * eta / (static_cast<double>(L) * L), 10.0)) {
        for (int k = L; k >= 1; --k) centres_.push_back(eta / k);
    }

    double operator()(double t) const {
        auto it = std::lower_bound(centres_.begin(), centres_.end(), t);
        double d = std::numeric_limits<double>::infinity();
        if (it != centres_.end()) d = *it - t;
        if (it != centres_.begin()) d = std::min(d, t - *std::prev(it));
        if (d <= window) return near_scale * (1.0 + d);
        double cap = far_cap_;
        if (it != centres_.end()) cap = std::min(cap, (*it - window) - t);
        return cap;
    }

    static constexpr double window = 5.0;
    static constexpr double near_scale = 0.05;

private:
    double far_cap_;
    std::vector<double> centres_;  // ascending
};

inline double f_closed_form(FSource src, double c, double t) {
    switch (src) {
    case FSource::decay_bound: return 4.0 * c / (1.0 + t * t);
    case FSource::zero: return 0.0;
    case FSource::ode: break;
    }
    return 0.0;
}

// State layout [theta_1..theta_L, G_1..G_L, f]; f is live only for FSource::ode.
class ModeSystem {
public:
    ModeSystem(const PhysicalParams& p, double eta, int L, FSource src, bool per_l)
        : p_(p), eta_(eta), L_(L), src_(src), per_l_(per_l), caps_(eta, L) {}

    std::size_t size() const { return static_cast<std::size_t>(2 * L_ + 1); }
    int L() const { return L_; }

    etd::QuadraticDecay decay(std::size_t i) const {
        const auto L = static_cast<std::size_t>(L_);
        if (i < L) return {};
        if (i < 2 * L) return {p_.nu, static_cast<double>(i - L + 1), eta_};
        if (src_ == FSource::ode) return {p_.nu, 1.0, 0.0};
        return {};
    }

    double step_cap(double t) const { return caps_(t); }

    void nonstiff(double t, std::span<const complex> y, std::span<complex> dy) const {
        const auto L = static_cast<std::size_t>(L_);
        const double f = (src_ == FSource::ode) ? y[2 * L].real() : f_closed_form(src_, p_.c, t);
        auto theta = y.subspan(0, L), G = y.subspan(L, L);
        auto dtheta = dy.subspan(0, L), dG = dy.subspan(L, L);
        detail::coupling_rhs(t, theta, G, f, p_.c, eta_, L_, per_l_, kc_, kd_, dtheta, dG);
        dy[2 * L] = (src_ == FSource::ode) ? complex{-p_.g} : complex{};
    }

private:
    PhysicalParams p_;
    double eta_;
    int L_;
    FSource src_;
    bool per_l_;
    ResonanceCaps caps_;
    mutable std::vector<double> kc_, kd_;
};

struct Trajectory {
    SimConfig config;
    PhysicalParams params;
    std::vector<ModeState> samples;
    std::vector<WaveState> wave;
    etd::StepStats meta;

    // index of the sample at time t (exact match up to round-off)
    std::optional<std::size_t> find(double t) const {
        auto it = std::lower_bound(samples.begin(), samples.end(), t,
                                   [](const ModeState& s, double v) { return s.t < v; });
        const double tol = 1e-12 * std::max(1.0, std::abs(t));
        for (auto j : {it, it == samples.begin() ? it : std::prev(it)}) {
            if (j != samples.end() && std::abs(j->t - t) <= tol) return static_cast<std::size_t>(j - samples.begin());
        }
        return std::nullopt;
    }
};

inline bool spans_resonant_regime(const SimConfig& cfg, double c) {
    const double ceta_pi = c * cfg.eta * std::numbers::pi;
    if (ceta_pi < 1.0) return false;
    const int k0 = static_cast<int>(std::floor(std::cbrt(ceta_pi) * (1.0 + 1e-12)));
    const double lo = resonant_time(cfg.eta, std::max(k0, 1)), hi = resonant_time(cfg.eta, 0);
    return cfg.t_start < hi && cfg.t_end > lo;
}

inline void validate_config(const SimConfig& cfg, const PhysicalParams& p) {
    if (!(cfg.eta > 0.0) || !std::isfinite(cfg.eta)) throw ConfigError("eta must be finite and > 0");
    if (cfg.L < 2) throw ConfigError("L must be >= 2");
    if (!std::isfinite(cfg.t_start) || !std::isfinite(cfg.t_end) || cfg.t_start < 0.0)
        throw ConfigError("t_start must be >= 0 and times finite");
    if (!(cfg.t_start < cfg.t_end)) throw ConfigError("t_start must be < t_end");
    if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0)) throw ConfigError("rtol and atol must be > 0");
    for (double t : cfg.sample_times)
        if (!(t >= cfg.t_start && t <= cfg.t_end)) throw ConfigError("sample time outside [t_start, t_end]");
    const auto& in = cfg.init;
    if (in.kind == InitKind::file) {
        if (static_cast<int>(in.theta.size()) != cfg.L || static_cast<int>(in.G.size()) != cfg.L)
            throw ConfigError("init file must provide exactly L modes");
    } else {
        if (in.mode < 1) throw ConfigError("init.mode must be >= 1");
        if (cfg.L < in.mode + 2) throw ConfigError("L must be >= init.mode + 2");
    }
    if (spans_resonant_regime(cfg, p.c)) {
        const int need = resonant_mode_count_bound(p.c, cfg.eta);
        if (cfg.L < need)
            throw ConfigError("L = " + std::to_string(cfg.L) + " too small for the resonant regime, need >= " +
                              std::to_string(need));
    }
}

inline ModeState initial_state(const SimConfig& cfg) {
    ModeState s(cfg.t_start, cfg.L);
    const auto& in = cfg.init;
    switch (in.kind) {
    case InitKind::delta_theta: s.th(in.mode) = in.amplitude; break;
    case InitKind::delta_G: s.gu(in.mode) = in.amplitude; break;
    case InitKind::file:
        s.theta = in.theta;
        s.G = in.G;
        break;
    }
    return s;
}

// f at time t for the co-integrated wave (f0 = 0, g0 = g at t = 0)
inline double wave_f_at(double t, const PhysicalParams& p) {
    if (t == 0.0) return 0.0;
    return solve_wave_ode(p, 1, 0.0, p.g, {t}).front().f;
}

inline double f_value(FSource src, const PhysicalParams& p, double t) {
    return src == FSource::ode ? wave_f_at(t, p) : f_closed_form(src, p.c, t);
}

namespace detail {

inline std::vector<complex> pack(const ModeState& s, double f) {
    std::vector<complex> y;
    y.reserve(2 * s.theta.size() + 1);
    y.insert(y.end(), s.theta.begin(), s.theta.end());
    y.insert(y.end(), s.G.begin(), s.G.end());
    y.push_back(complex{f});
    return y;
}

inline ModeState unpack(const std::vector<complex>& y, double t, int L) {
    ModeState s(t, L);
    std::copy(y.begin(), y.begin() + L, s.theta.begin());
    std::copy(y.begin() + L, y.begin() + 2 * L, s.G.begin());
    return s;
}

}  // namespace detail

// Advance from state.t to t1 under error control. f_t0 overrides the wave amplitude at state.t.
inline ModeState step_etd(const ModeState& state, double t1, FSource src, const PhysicalParams& p, double eta,
                          double rtol, double atol, std::optional<double> f_t0 = std::nullopt, bool per_l = false) {
    if (!(t1 > state.t)) throw ConfigError("step_etd requires t1 > t0");
    const ModeSystem sys(p, eta, state.L(), src, per_l);
    etd::KrogstadStepper stepper(sys);
    const double f0 = f_t0 ? *f_t0 : (src == FSource::ode ? wave_f_at(state.t, p) : 0.0);
    auto y = detail::pack(state, f0);
    double h = sys.step_cap(state.t);
    etd::StepStats stats;
    stepper.advance(state.t, t1, y, h, {rtol, atol}, stats);
    return detail::unpack(y, t1, state.L());
}

inline std::vector<double> sample_schedule(const SimConfig& cfg) {
    std::vector<double> ts{cfg.t_start, cfg.t_end};
    ts.insert(ts.end(), cfg.sample_times.begin(), cfg.sample_times.end());
    for (int k = 0; k <= cfg.L; ++k) {
        const double tk = resonant_time(cfg.eta, k);
        if (tk >= cfg.t_start && tk <= cfg.t_end) ts.push_back(tk);
    }
    std::sort(ts.begin(), ts.end());
    // coincident up to round-off: keep the first
    ts.erase(std::unique(ts.begin(), ts.end(),
                         [](double a, double b) { return b - a <= 1e-12 * std::max(1.0, std::abs(a)); }),
             ts.end());
    return ts;
}

inline constexpr double truncation_guard = 1e-8;

inline Trajectory integrate(const SimConfig& cfg, const PhysicalParams& p, const ModeState& init) {
    validate_config(cfg, p);
    if (init.L() != cfg.L || static_cast<int>(init.G.size()) != cfg.L) throw ConfigError("init has wrong length");
    if (init.t != cfg.t_start) throw ConfigError("init.t must equal t_start");
    if (!init.finite()) throw ConfigError("init contains non-finite amplitudes");

    Trajectory tr;
    tr.config = cfg;
    tr.params = p;
    const ModeSystem sys(p, cfg.eta, cfg.L, cfg.f_source, cfg.g_forcing_per_l);
    etd::KrogstadStepper stepper(sys);
    const etd::Options opt{cfg.rtol, cfg.atol};

    auto y = detail::pack(init, cfg.f_source == FSource::ode ? wave_f_at(cfg.t_start, p) : 0.0);
    const auto L = static_cast<std::size_t>(cfg.L);
    double t = cfg.t_start, h = sys.step_cap(t);
    for (double ts : sample_schedule(cfg)) {
        if (ts > t) {
            stepper.advance(t, ts, y, h, opt, tr.meta);
            t = ts;
        }
        ModeState s = detail::unpack(y, ts, cfg.L);
        if (!s.finite()) throw NumericalError("non-finite mode state", ts);
        const double n = state_norm(s);
        if (cfg.truncation_check && (std::abs(s.theta[L - 1]) > truncation_guard * n || std::abs(s.G[L - 1]) > truncation_guard * n))
            throw TruncationError("mode L = " + std::to_string(cfg.L) + " reached the truncation guard", ts);
        const double f = cfg.f_source == FSource::ode ? y[2 * L].real() : f_closed_form(cfg.f_source, p.c, ts);
        tr.samples.push_back(std::move(s));
        tr.wave.push_back({ts, f, p.g, 1});
    }
    return tr;
}

}  // namespace echochain

#endif
