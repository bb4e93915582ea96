#ifndef ECHOCHAIN_DIAGNOSTICS_HPP
#define ECHOCHAIN_DIAGNOSTICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "core_model.hpp"
#include "mode_system.hpp"
#include "wave_dynamics.hpp"

namespace echochain {

inline constexpr double pi = std::numbers::pi;

// ---------------------------------------------------------------- thresholds

inline RegimeThresholds thresholds(double c, double eta, const ThresholdFactors& f = {}, int L = 0) {
    RegimeThresholds th;
    th.factors = f;
    const double x = c * eta * pi;
    th.all_stable = x < 1.0;
    if (!th.all_stable) {
        // the relative nudge keeps exact cubes such as 125 from rounding down
        const double nudge = 1.0 + 1e-12;
        th.k0 = static_cast<int>(std::floor(std::cbrt(x) * nudge));
        th.k1 = f.k1_stability_variant ? static_cast<int>(std::floor(20.0 * std::cbrt(c * eta) * nudge))
                                       : static_cast<int>(std::floor(f.a1 * th.k0 * nudge));
        th.k2 = std::max(1, static_cast<int>(std::floor(f.a2 * th.k0 * nudge)));
        th.k3 = std::max(1, static_cast<int>(std::floor(f.a3 * th.k0 * nudge)));
    }
    const int top = L > 0 ? L : std::max(th.k1, 1);
    for (int k = 0; k <= top; ++k) th.t_k.push_back(resonant_time(eta, k));
    return th;
}

// ---------------------------------------------------------------- norms

inline double norm_X(const std::vector<complex>& u, const WeightSpec& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double lam = weight_eval(w, static_cast<int>(i) + 1);
        s += lam * lam * std::norm(u[i]);
    }
    return std::sqrt(s);
}

inline std::vector<complex> difference(const std::vector<complex>& a, const std::vector<complex>& b) {
    std::vector<complex> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

// ---------------------------------------------------------------- coefficient integrals

enum class CoeffKind { c, d };

// int_{t0}^{t1} of coeff_c (or coeff_d) for target l on the given branch
inline double coefficient_integral(int l, Branch br, double t0, double t1, double c, double eta, double tol,
                                   CoeffKind kind = CoeffKind::c) {
    if (t1 < t0) throw ConfigError("coefficient_integral requires t1 >= t0");
    if (t1 == t0) return 0.0;
    const CoefficientQuery base{l, br, 0.0, c, eta};
    const int m = base.neighbour();
    if (m <= 0) return 0.0;
    auto f = [&](double t) {
        CoefficientQuery q = base;
        q.t = t;
        return kind == CoeffKind::c ? coeff_c(q) : coeff_d(q);
    };
    // split at the peak and a few widths around it so the adaptive rule sees the bump
    std::vector<double> cuts{t0, t1};
    const double peak = eta / m;
    for (double off : {-50.0, -5.0, 0.0, 5.0, 50.0})
        if (peak + off > t0 && peak + off < t1) cuts.push_back(peak + off);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double err = 0.0;
        const double part = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, cuts[i], cuts[i + 1],
                                                                                           20, 1e-13, &err);
        total += part;
        if (!std::isfinite(total) || err > std::max(tol, 1e-9 * std::abs(part)))
            throw NumericalError("coefficient quadrature did not converge", cuts[i], err);
    }
    return total;
}

// int over the real line of (1+s^2)^{-power}, power 1 or 2
inline double lorentzian_line_integral(int power, double* error = nullptr) {
    auto f = [power](double s) {
        const double lor = 1.0 / (1.0 + s * s);
        return power == 2 ? lor * lor : lor;
    };
    const double inf = std::numeric_limits<double>::infinity();
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -inf, inf, 25, 1e-14, &err);
    if (error) *error = err;
    return v;
}

// antiderivatives of (1+s^2)^{-1} and (1+s^2)^{-2}
inline double lorentzian_antiderivative(int power, double s) {
    if (power == 1) return std::atan(s);
    return 0.5 * (s / (1.0 + s * s) + std::atan(s));
}

struct ResonantIntegralCheck {
    bool evaluated = false;
    std::string reason;  // set when skipped
    double ratio = 0.0;  // int_{I_k} c_{k-1}^+ / (c eta pi / (2 k^3))
    bool pass = false;
};

inline ResonantIntegralCheck resonant_integral_check(int k, double c, double eta) {
    ResonantIntegralCheck r;
    if (k < 2) {
        r.reason = "k_below_2";
        return r;
    }
    if (eta / (static_cast<double>(k) * k) < 100.0) {
        r.reason = "eta_over_k2_below_100";
        return r;
    }
    const double kd = k;
    const double val = coefficient_integral(k - 1, Branch::plus, resonant_time(eta, k), resonant_time(eta, k - 1), c,
                                            eta, 1e-12 * c * eta / (kd * kd * kd));
    r.evaluated = true;
    r.ratio = val / (c * eta * pi / (2.0 * kd * kd * kd));
    r.pass = r.ratio > 0.8 && r.ratio <= 1.0;
    return r;
}

// Non-resonant coefficient bound 4c/k (eta/k^2)^{-2} for l not adjacent to k, over I_k.
struct NonResonantRow {
    int k = 0;
    int l = 0;
    Branch branch = Branch::plus;
    double integral = 0.0;
    double bound = 0.0;
    double slack = 0.0;
};

inline NonResonantRow nonresonant_coefficient_check(int k, int l, Branch br, double c, double eta) {
    NonResonantRow r{k, l, br};
    const double kd = k, ratio = eta / (kd * kd);
    r.integral = coefficient_integral(l, br, resonant_time(eta, k), resonant_time(eta, k - 1), c, eta, 1e-16);
    r.bound = 4.0 * c / kd / (ratio * ratio);
    r.slack = r.bound - r.integral;
    return r;
}

// int_{t0}^{T} exp(-nu int_t^T (l^2 + (eta - l s)^2) ds) fn(t) dt, with extra cuts at `peaks`
template <class F>
inline double damped_kernel_integral(int l, double t0, double T, double nu, double eta, F&& fn,
                                     std::vector<double> peaks = {}) {
    if (T <= t0) return 0.0;
    const etd::QuadraticDecay dk{nu, static_cast<double>(l), eta};
    auto f = [&](double t) { return std::exp(-dk.exponent(t, T)) * fn(t); };
    // the kernel is a boundary layer of width ~ 1/a(T) at t = T
    const double a = std::max(dk.rate(T), 1e-300);
    std::vector<double> cuts{t0, T};
    for (double w : {1e4, 1e2, 1.0})
        if (T - w / a > t0) cuts.push_back(T - w / a);
    for (double pk : peaks)
        for (double off : {-5.0, 0.0, 5.0})
            if (pk + off > t0 && pk + off < T) cuts.push_back(pk + off);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        if (cuts[i + 1] <= cuts[i]) continue;
        total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, cuts[i], cuts[i + 1], 12, 1e-11);
    }
    if (!std::isfinite(total)) throw NumericalError("damped kernel quadrature failed", T);
    return total;
}

// ---------------------------------------------------------------- coefficient bound table

struct CoefficientRow {
    CoefficientRow(int k_, std::string family_, int l_, Branch b) : k(k_), family(std::move(family_)), l(l_), branch(b) {}

    int k = 0;
    std::string family;
    int l = 0;
    Branch branch = Branch::plus;
    double value = 0.0;
    double bound = 0.0;
    std::optional<double> lower;  // exclusive lower window, resonant rows only
    bool evaluated = true;
    std::string note;
    double slack() const { return lower ? std::min(bound - value, value - *lower) : bound - value; }
    bool pass() const { return !evaluated || (value <= bound && (!lower || value > *lower)); }
};

// Integrals over I_k (or sup over T in I_k for the damped kernels) against the stated bounds.
inline std::vector<CoefficientRow> coefficient_table(int k, double c, double nu, double eta, int window = 3,
                                                     int T_points = 8) {
    if (k < 1) throw ConfigError("coefficient_table: k must be >= 1");
    const double kd = k, r = eta / (kd * kd);
    const double tk = resonant_time(eta, k), tkm = resonant_time(eta, k - 1);
    std::vector<double> Ts;
    for (int i = 1; i <= T_points; ++i) Ts.push_back(tk + (tkm - tk) * i / T_points);
    Ts.push_back(eta / kd + 1.0);
    std::vector<CoefficientRow> rows;

    // resonant pair: the ratio window is only meaningful when the tails are negligible
    for (CoeffKind kind : {CoeffKind::c, CoeffKind::d}) {
        const double full = c * eta / (kd * kd * kd) * (kind == CoeffKind::c ? pi / 2.0 : pi);
        for (auto [l, br] : {std::pair{k - 1, Branch::plus}, std::pair{k + 1, Branch::minus}}) {
            if (l < 1) continue;
            CoefficientRow row(k, kind == CoeffKind::c ? "resonant_c" : "resonant_d", l, br);
            row.value = coefficient_integral(l, br, tk, tkm, c, eta, 1e-10 * full, kind);
            row.bound = full;
            row.lower = 0.8 * full;
            if (r < 100.0) {
                row.evaluated = false;
                row.note = "eta_over_k2_below_100";
            }
            rows.push_back(row);
        }
    }

    const double f_scale = 1.0 / (2.0 * c);  // nu/g
    for (int l = std::max(1, k - window); l <= k + window; ++l) {
        for (Branch br : {Branch::minus, Branch::plus}) {
            const CoefficientQuery base{l, br, 0.0, c, eta};
            const int m = base.neighbour();
            if (m <= 0) continue;
            auto cc = [&](double t) { return coeff_c({l, br, t, c, eta}); };
            auto dd = [&](double t) { return coeff_d({l, br, t, c, eta}); };
            const std::vector<double> peaks{eta / m, eta / l};

            if (m != k) {
                CoefficientRow rc(k, "nonresonant_c", l, br);
                rc.value = coefficient_integral(l, br, tk, tkm, c, eta, 1e-18, CoeffKind::c);
                rc.bound = 4.0 * c / kd / (r * r);
                rows.push_back(rc);
                CoefficientRow rd(k, "nonresonant_d", l, br);
                rd.value = coefficient_integral(l, br, tk, tkm, c, eta, 1e-18, CoeffKind::d);
                rd.bound = 4.0 * c / kd;
                rows.push_back(rd);
            }

            // f-weighted couplings in the G equation, f at its decay bound
            auto fw = [&](double t) { return f_closed_form(FSource::decay_bound, c, t) * f_scale * l; };
            CoefficientRow gfc(k, "G_f_c", l, br), gfd(k, "G_f_d", l, br);
            for (double T : Ts) {
                const double vc = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                    [&](double t) { return fw(t) * cc(t); }, tk, T, 12, 1e-11);
                const double vd = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                    [&](double t) { return fw(t) * dd(t); }, tk, T, 12, 1e-11);
                gfc.value = std::max(gfc.value, std::abs(vc));
                gfd.value = std::max(gfd.value, std::abs(vd));
            }
            gfc.bound = m == k ? c / r : c / (r * r * r * r);
            gfd.bound = m == k ? c / r : c / (r * r);
            rows.push_back(gfc);
            rows.push_back(gfd);

            CoefficientRow gtc(k, "G_theta_c", l, br), ggd(k, "G_G_d", l, br);
            for (double T : Ts) {
                gtc.value = std::max(gtc.value, std::abs(damped_kernel_integral(
                                                    l, tk, T, nu, eta,
                                                    [&](double t) { return lorentzian(eta / l - t) * cc(t); }, peaks)));
                ggd.value = std::max(ggd.value, std::abs(damped_kernel_integral(
                                                    l, tk, T, nu, eta,
                                                    [&](double t) { return lorentzian(eta / l - t) * dd(t); }, peaks)));
            }
            if (l == k) {
                gtc.bound = c / kd / (r * r * r) * 16.0 * pi;
                ggd.bound = c / kd / r * pi;
            } else if (m == k) {
                gtc.bound = c / kd / r * pi / 2.0;
                ggd.bound = c / kd / r * pi;
            } else {
                gtc.bound = 32.0 * c / kd / (r * r * r * r);
                ggd.bound = c / kd / (r * r);
            }
            rows.push_back(gtc);
            rows.push_back(ggd);
        }

        CoefficientRow gt(k, l == k ? "G_theta_res" : "G_theta_nonres", l, Branch::plus);
        for (double T : Ts) {
            const double v = damped_kernel_integral(
                l, tk, T, nu, eta,
                [&](double t) {
                    const double g = g_forcing(l, t, eta, false);
                    return l == k ? g : std::abs(g);
                },
                {eta / l});
            gt.value = std::max(gt.value, std::abs(v));
        }
        gt.bound = l == k ? 2.0 : 2.0 / (r * r);
        rows.push_back(gt);
    }
    return rows;
}

// ---------------------------------------------------------------- multipliers and energy

inline double multiplier_small(double t, int l, double eta, double C = 0.01) {
    double s = 0.0;
    for (int lp : {l - 1, l, l + 1})
        if (lp != 0) s += std::atan(eta / lp - t);
    return std::exp(C * s);
}

inline double multiplier_intermediate(double t, int k, double eta) {
    const double tk = resonant_time(eta, k);
    if (t < tk) throw ConfigError("multiplier_intermediate requires t >= t_k");
    const double c0 = eta / k;
    return std::exp(-3.0 * (std::atan(c0 - tk) - std::atan(c0 - t)));
}

inline double energy(const ModeState& s, const WeightSpec& w, const std::vector<double>& A) {
    std::vector<complex> at(s.theta.size()), ag(s.G.size());
    for (std::size_t i = 0; i < at.size(); ++i) {
        if (!(A[i] > 0.0)) throw ConfigError("multiplier values must be positive");
        at[i] = A[i] * s.theta[i];
        ag[i] = A[i] * s.G[i];
    }
    const double nt = norm_X(at, w), ng = norm_X(ag, w);
    return 1600.0 * nt * nt + ng * ng;
}

inline std::vector<double> small_multipliers(double t, int L, double eta, double C = 0.01) {
    std::vector<double> A(static_cast<std::size_t>(L));
    for (int l = 1; l <= L; ++l) A[static_cast<std::size_t>(l - 1)] = multiplier_small(t, l, eta, C);
    return A;
}

// ---------------------------------------------------------------- echo gains

struct EchoGain {
    int k = 0;
    std::optional<double> minus;  // absent when k-1 = 0
    std::optional<double> plus;   // absent when k+1 > L
};

inline std::size_t require_sample(const Trajectory& tr, double t, const char* what) {
    auto i = tr.find(t);
    if (!i) throw ConfigError(std::string("trajectory has no sample at ") + what + " = " + std::to_string(t));
    return *i;
}

inline EchoGain echo_gain(const Trajectory& tr, int k) {
    const double eta = tr.config.eta;
    const int L = tr.config.L;
    if (k < 1 || k > L) throw ConfigError("echo_gain: k out of range");
    const auto& a = tr.samples[require_sample(tr, resonant_time(eta, k), "t_k")];
    const auto& b = tr.samples[require_sample(tr, resonant_time(eta, k - 1), "t_{k-1}")];
    const double den = std::abs(a.th(k));
    if (den == 0.0) throw NumericalError("echo_gain: theta_k(t_k) = 0", a.t);
    EchoGain g;
    g.k = k;
    if (k - 1 >= 1) g.minus = std::abs(b.th(k - 1)) / den;
    if (k + 1 <= L) g.plus = std::abs(b.th(k + 1)) / den;
    return g;
}

struct ChainRecord {
    int k = 0;
    double t_k = 0.0;
    std::optional<double> gain_minus;
    std::optional<double> gain_plus;
    double predicted = 0.0;
    int dominant_mode = 0;
};

struct ChainReport {
    std::vector<ChainRecord> records;  // decreasing k
    std::vector<int> skipped;          // theta_k(t_k) = 0
    double total_inflation = 1.0;
    double G_inflation = 0.0;
    bool G_inflation_vs_theta0 = false;  // G(t_start) = 0, ratio taken against theta(t_start)
    double theta_norm_start = 0.0;
    double theta_norm_2eta = 0.0;
    RegimeThresholds thresholds;
};

inline int dominant_mode(const ModeState& s) {
    int best = 1;
    for (int l = 2; l <= s.L(); ++l)
        if (std::abs(s.th(l)) > std::abs(s.th(best))) best = l;
    return best;
}

inline ChainReport chain_report(const Trajectory& tr, const PhysicalParams& p, const WeightSpec& w) {
    const double eta = tr.config.eta;
    const int L = tr.config.L;
    ChainReport r;
    r.thresholds = thresholds(p.c, eta, {}, L);
    const double x = p.c * eta * pi;
    for (int k = std::min(L, r.thresholds.all_stable ? 0 : r.thresholds.k0); k >= 1; --k) {
        const double kd = k;
        if (x / (kd * kd * kd) < 1.0) continue;
        const double tk = resonant_time(eta, k), tkm = resonant_time(eta, k - 1);
        if (!tr.find(tk) || !tr.find(tkm)) continue;
        const auto& a = tr.samples[*tr.find(tk)];
        if (std::abs(a.th(k)) == 0.0) {
            r.skipped.push_back(k);
            continue;
        }
        const EchoGain g = echo_gain(tr, k);
        ChainRecord rec;
        rec.k = k;
        rec.t_k = tk;
        rec.gain_minus = g.minus;
        rec.gain_plus = g.plus;
        rec.predicted = x / (2.0 * kd * kd * kd);
        rec.dominant_mode = dominant_mode(tr.samples[*tr.find(tkm)]);
        r.records.push_back(rec);
    }
    const auto& s0 = tr.samples.front();
    const auto& s2 = tr.samples[require_sample(tr, 2.0 * eta, "2 eta")];
    r.theta_norm_start = norm_X(s0.theta, w);
    r.theta_norm_2eta = norm_X(s2.theta, w);
    if (r.theta_norm_start == 0.0) throw NumericalError("chain_report: zero initial theta", s0.t);
    r.total_inflation = r.theta_norm_2eta / r.theta_norm_start;
    const double g0 = norm_X(s0.G, w);
    r.G_inflation_vs_theta0 = g0 == 0.0;
    r.G_inflation = norm_X(s2.G, w) / (g0 == 0.0 ? r.theta_norm_start : g0);
    return r;
}

// ---------------------------------------------------------------- bootstrap (resonant interval)

struct InequalityResult {
    std::string name;
    bool holds = true;
    double slack = std::numeric_limits<double>::infinity();  // bound minus observed, minimum over checked terms
    double bound = 0.0;                                      // bound at the minimising term
    int worst_mode = 0;
};

struct BootstrapRecord {
    double T = 0.0;
    std::array<InequalityResult, 5> B;
};

struct BootstrapReport {
    int k = 0;
    bool g_forcing_per_l = false;  // convention the trajectory was computed with
    std::vector<BootstrapRecord> records;
};

namespace detail {

inline void tighten(InequalityResult& r, double bound, double observed, int mode) {
    const double slack = bound - observed;
    if (slack < r.slack) {
        r.slack = slack;
        r.bound = bound;
        r.worst_mode = mode;
    }
    r.holds = r.slack >= 0.0;
}

// trapezoid of f(sample) over samples with t in [a, b]
template <class F>
inline complex sample_trapezoid(const Trajectory& tr, double a, double b, F&& f) {
    complex acc{};
    const ModeState* prev = nullptr;
    complex fprev{};
    for (const auto& s : tr.samples) {
        if (s.t < a - 1e-12 * std::max(1.0, a)) continue;
        if (s.t > b + 1e-12 * std::max(1.0, b)) break;
        const complex fv = f(s);
        if (prev) acc += 0.5 * (s.t - prev->t) * (fv + fprev);
        prev = &s;
        fprev = fv;
    }
    return acc;
}

}  // namespace detail

// G_k forced by theta_k = 1 through the damped kernel exp(-D_k(t, T))
inline double bootstrap_G_reference(int k, double tk, double T, double nu, double eta, bool per_l) {
    return damped_kernel_integral(
        k, tk, T, nu, eta, [&](double t) { return g_forcing(k, t, eta, per_l); }, {eta / k});
}

inline BootstrapReport bootstrap_check(const Trajectory& tr, int k, const std::vector<double>& at) {
    const double eta = tr.config.eta, c = tr.params.c, nu = tr.params.nu;
    const int L = tr.config.L;
    const double tk = resonant_time(eta, k);
    const auto& s0 = tr.samples.front();
    if (std::abs(s0.t - tk) > 1e-12 * std::max(1.0, tk)) throw ConfigError("bootstrap_check: trajectory must start at t_k");
    for (int l = 1; l <= L; ++l) {
        const complex want = (l == k) ? complex{1.0} : complex{};
        if (s0.th(l) != want || s0.gu(l) != complex{}) throw ConfigError("bootstrap_check: initial data must be theta = delta_k, G = 0");
    }
    const double kd = k, ratio = eta / (kd * kd), small = c / (ratio * ratio), ceta_k3 = c * eta / (kd * kd * kd);
    BootstrapReport rep;
    rep.k = k;
    rep.g_forcing_per_l = tr.config.g_forcing_per_l;
    for (double T : at) {
        const auto& s = tr.samples[require_sample(tr, T, "bootstrap time")];
        BootstrapRecord rec;
        rec.T = T;
        rec.B = {InequalityResult{"B1"}, InequalityResult{"B2"}, InequalityResult{"B3"}, InequalityResult{"B4"},
                 InequalityResult{"B5"}};
        detail::tighten(rec.B[0], 10.0 * c / kd / ratio, std::abs(s.th(k) - 1.0), k);
        for (int l : {k - 1, k + 1}) {
            if (l < 1 || l > L) continue;
            const Branch toward = (l == k - 1) ? Branch::plus : Branch::minus;
            const double ic = (T > tk) ? coefficient_integral(l, toward, tk, T, c, eta, 1e-14) : 0.0;
            const complex idg = detail::sample_trapezoid(tr, tk, T, [&](const ModeState& m) {
                return coeff_d({l, toward, m.t, c, eta}) * m.gu(k);
            });
            detail::tighten(rec.B[1], 0.5 / kd * ceta_k3, std::abs(s.th(l) - ic - idg), l);
        }
        for (int l = 1; l <= L; ++l) {
            const int gap = std::abs(l - k);
            if (gap >= 2) detail::tighten(rec.B[2], ceta_k3 * std::pow(small, gap + 1), std::abs(s.th(l)), l);
            if (gap >= 1) detail::tighten(rec.B[4], eta / (kd * kd * kd) * std::pow(small, gap), std::abs(s.gu(l)), l);
        }
        const double gref = bootstrap_G_reference(k, tk, T, nu, eta, tr.config.g_forcing_per_l);
        detail::tighten(rec.B[3], 2.0 / kd, std::abs(s.gu(k) - gref), k);
        rep.records.push_back(rec);
    }
    return rep;
}

// ---------------------------------------------------------------- persistence

struct PersistenceReport {
    int mode = 0;
    double reference = 0.0;  // |theta_{k3+2}(t_{k3})|
    double min_ratio = 0.0;
    double t_min = 0.0;
    bool precondition = false;  // |theta_m| >= 0.5 |theta|_inf + 10 |G|_inf at t_{k3}
};

inline PersistenceReport persistence_check(const Trajectory& tr, int k3) {
    const double eta = tr.config.eta, t3 = resonant_time(eta, k3);
    const int m = k3 + 2;
    if (m > tr.config.L) throw ConfigError("persistence_check: k3 + 2 exceeds L");
    const auto& ref = tr.samples[require_sample(tr, t3, "t_{k3}")];
    PersistenceReport r;
    r.mode = m;
    r.reference = std::abs(ref.th(m));
    if (r.reference == 0.0) throw NumericalError("persistence_check: zero reference amplitude", t3);
    double th_inf = 0.0, g_inf = 0.0;
    for (int l = 1; l <= ref.L(); ++l) {
        th_inf = std::max(th_inf, std::abs(ref.th(l)));
        g_inf = std::max(g_inf, std::abs(ref.gu(l)));
    }
    r.precondition = r.reference >= 0.5 * th_inf + 10.0 * g_inf;
    r.min_ratio = std::numeric_limits<double>::infinity();
    for (const auto& s : tr.samples) {
        if (s.t < t3) continue;
        const double q = std::abs(s.th(m)) / r.reference;
        if (q < r.min_ratio) {
            r.min_ratio = q;
            r.t_min = s.t;
        }
    }
    return r;
}

// ---------------------------------------------------------------- stability suites

struct BoundCheck {
    std::string name;
    double worst_ratio = 0.0;  // observed / bound, <= 1 passes
    double at_time = 0.0;
    int k = 0;
    bool pass() const { return worst_ratio <= 1.0; }
};

// sup_t (40^2 |theta|_X + |G|_X) <= factor * (40^2 |theta_0|_X + |G_0|_X)
inline BoundCheck small_frequency_check(const Trajectory& tr, const WeightSpec& w, double factor = 4.0) {
    BoundCheck b{"small_frequency"};
    const auto& s0 = tr.samples.front();
    const double base = 1600.0 * norm_X(s0.theta, w) + norm_X(s0.G, w);
    for (const auto& s : tr.samples) {
        const double v = (1600.0 * norm_X(s.theta, w) + norm_X(s.G, w)) / (factor * base);
        if (v > b.worst_ratio) {
            b.worst_ratio = v;
            b.at_time = s.t;
        }
    }
    return b;
}

// |theta(t) - theta(2eta)|_X <= safety * 2c/eta (|theta(2eta)|_X + |G(2eta)|_X) for t > 2 eta
inline BoundCheck freeze_check(const Trajectory& tr, const WeightSpec& w, double safety = 4.0) {
    BoundCheck b{"large_time_freeze"};
    const double eta = tr.config.eta, c = tr.params.c;
    const auto& r = tr.samples[require_sample(tr, 2.0 * eta, "2 eta")];
    const double bound = safety * 2.0 * c / eta * (norm_X(r.theta, w) + norm_X(r.G, w));
    for (const auto& s : tr.samples) {
        if (s.t <= r.t) continue;
        const double v = norm_X(difference(s.theta, r.theta), w) / bound;
        if (v > b.worst_ratio) {
            b.worst_ratio = v;
            b.at_time = s.t;
        }
    }
    return b;
}

// Intervals with c eta / k^3 in (1/8000, 1/pi): growth across I_k at most e^{3 pi}.
inline BoundCheck intermediate_check(const Trajectory& tr, const WeightSpec& w) {
    BoundCheck b{"intermediate_regime"};
    const double eta = tr.config.eta, c = tr.params.c;
    for (int k = 1; k <= tr.config.L; ++k) {
        const double r = c * eta / (static_cast<double>(k) * k * k);
        if (!(r > 1.0 / 8000.0 && r < 1.0 / pi)) continue;
        auto i = tr.find(resonant_time(eta, k)), j = tr.find(resonant_time(eta, k - 1));
        if (!i || !j) continue;
        const auto &a = tr.samples[*i], &e = tr.samples[*j];
        const double base = norm_X(a.theta, w) + norm_X(a.G, w);
        if (base == 0.0) continue;
        const double v = (norm_X(e.theta, w) + norm_X(e.G, w)) / (std::exp(3.0 * pi) * base);
        if (v > b.worst_ratio) {
            b.worst_ratio = v;
            b.at_time = e.t;
            b.k = k;
        }
    }
    return b;
}

// Resonant intervals: |theta(t) - theta(t_k)|_X <= 2 c eta pi / k^3 (|theta(t_k)|_X + |G(t_k)|_X) on I_k.
inline BoundCheck resonant_upper_check(const Trajectory& tr, const WeightSpec& w) {
    BoundCheck b{"resonant_upper"};
    const double eta = tr.config.eta, c = tr.params.c;
    for (int k = 1; k <= tr.config.L; ++k) {
        const double kd = k, amp = c * eta * pi / (kd * kd * kd);
        if (amp < 1.0) continue;
        auto i = tr.find(resonant_time(eta, k)), j = tr.find(resonant_time(eta, k - 1));
        if (!i || !j) continue;
        const auto& a = tr.samples[*i];
        const double base = amp * (norm_X(a.theta, w) + norm_X(a.G, w));
        if (base == 0.0) continue;
        for (std::size_t n = *i; n <= *j; ++n) {
            const double v = norm_X(difference(tr.samples[n].theta, a.theta), w) / base;
            if (v > b.worst_ratio) {
                b.worst_ratio = v;
                b.at_time = tr.samples[n].t;
                b.k = k;
            }
        }
    }
    return b;
}

struct EnergyMonotonicity {
    double worst_increase = 0.0;  // max relative step increase E(n+1)/E(n) - 1
    double at_time = 0.0;
    double allowed = 0.0;
    bool pass() const { return worst_increase <= allowed; }
};

// Energy with the small-frequency multiplier on consecutive samples, optionally only for t < t_max.
inline EnergyMonotonicity energy_monotonicity(const Trajectory& tr, const WeightSpec& w, double C = 0.01,
                                              double t_max = std::numeric_limits<double>::infinity()) {
    EnergyMonotonicity r;
    r.allowed = 10.0 * tr.config.rtol;
    const double eta = tr.config.eta;
    const int L = tr.config.L;
    double prev = -1.0;
    for (const auto& s : tr.samples) {
        if (s.t >= t_max) break;
        const double e = energy(s, w, small_multipliers(s.t, L, eta, C));
        if (prev > 0.0) {
            const double inc = e / prev - 1.0;
            if (inc > r.worst_increase) {
                r.worst_increase = inc;
                r.at_time = s.t;
            }
        }
        prev = e;
    }
    return r;
}

// For t in I_k and l != k: |t - eta/l| >= max(eta/k^2, eta/l^2) / 4.
inline double separation_margin(double eta, int k, int l, int samples = 64) {
    const double a = resonant_time(eta, k), b = resonant_time(eta, k - 1);
    const double need = 0.25 * std::max(eta / (static_cast<double>(k) * k), eta / (static_cast<double>(l) * l));
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= samples; ++i) {
        const double t = a + (b - a) * i / samples;
        worst = std::min(worst, std::abs(t - eta / l) - need);
    }
    return worst;
}

// ---------------------------------------------------------------- scaling fits

struct RegressorFit {
    double exponent = 0.0;
    LineFit fit;
};

struct FitReport {
    std::array<RegressorFit, 3> regressors;  // (c eta)^{1/3}, ^{1/2}, ^{1/4}
    int winner = 0;
    bool cube_root_wins() const {
        return regressors[0].fit.r_squared > regressors[1].fit.r_squared &&
               regressors[0].fit.r_squared > regressors[2].fit.r_squared;
    }
};

inline FitReport fit_cube_root(const std::vector<std::pair<double, double>>& pts) {
    if (pts.size() < 5) throw ConfigError("fit_cube_root needs at least 5 points");
    double lo = pts.front().first, hi = lo;
    for (const auto& [x, v] : pts) {
        if (!(x > 0.0)) throw ConfigError("fit_cube_root: c*eta must be > 0");
        if (!(v > 1.0)) throw ConfigError("fit_cube_root: inflations must exceed 1");
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (!(hi > lo * (1.0 + 1e-12))) throw ConfigError("fit_cube_root: degenerate regressor spread");
    FitReport r;
    const std::array<double, 3> exps{1.0 / 3.0, 0.5, 0.25};
    for (std::size_t j = 0; j < 3; ++j) {
        std::vector<double> xs, ys;
        for (const auto& [x, v] : pts) {
            xs.push_back(std::pow(x, exps[j]));
            ys.push_back(std::log(v));
        }
        r.regressors[j] = {exps[j], least_squares(xs, ys)};
    }
    for (int j = 1; j < 3; ++j)
        if (r.regressors[static_cast<std::size_t>(j)].fit.r_squared > r.regressors[static_cast<std::size_t>(r.winner)].fit.r_squared)
            r.winner = j;
    return r;
}

}  // namespace echochain

#endif
