#ifndef ECHOCHAIN_ETD_HPP
#define ECHOCHAIN_ETD_HPP

// Exponential Runge-Kutta stepping for linear systems y' = -a_i(t) y_i + N(t, y)
// whose diagonal decay rates are quadratic in time,
//     a_i(t) = nu * (l^2 + (eta - l t)^2).
// The four-stage Krogstad scheme is used with its phi-functions replaced by
// moments of the exact kernel exp(-int_s^t1 a), so pure decay is reproduced
// exactly and a = 0 reduces to classical RK4. Error control is by step doubling.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "core_model.hpp"

namespace echochain::etd {

struct QuadraticDecay {
    double nu = 0.0;
    double l = 0.0;
    double eta = 0.0;

    double rate(double s) const {
        const double r = eta - l * s;
        return nu * (l * l + r * r);
    }

    // int_{t0}^{t1} rate, factored so that large |eta - l t| does not cancel
    double exponent(double t0, double t1) const {
        if (nu == 0.0 || t1 == t0) return 0.0;
        const double a = eta - l * t0, b = eta - l * t1;
        return nu * (t1 - t0) * (l * l + (a * a + a * b + b * b) / 3.0);
    }
};

// decay = exp(-D(t0,t1)); m_j = int_0^1 exp(-D(t0 + s h, t1)) s^j ds
struct Moments {
    double decay = 1.0;
    double m0 = 1.0;
    double m1 = 0.5;
    double m2 = 1.0 / 3.0;
};

inline void phi_functions(double z, double& p1, double& p2, double& p3) {
    if (std::abs(z) < 0.5) {
        // phi_k(z) = sum_n z^n / (n+k)!
        double t1 = 1.0, t2 = 0.5, t3 = 1.0 / 6.0;
        p1 = p2 = p3 = 0.0;
        for (int n = 0; n < 24; ++n) {
            p1 += t1;
            p2 += t2;
            p3 += t3;
            t1 *= z / (n + 2);
            t2 *= z / (n + 3);
            t3 *= z / (n + 4);
        }
        return;
    }
    p1 = std::expm1(z) / z;
    p2 = (p1 - 1.0) / z;
    p3 = (p2 - 0.5) / z;
}

namespace detail {

using rule = boost::math::quadrature::gauss<double, 15>;

// D(u) = a1 u + a2 u^2 + a3 u^3 is the exponent accumulated backwards from t1.
struct BackwardExponent {
    double a1, a2, a3;
    double value(double u) const { return u * (a1 + u * (a2 + u * a3)); }
    double slope(double u) const { return a1 + u * (2.0 * a2 + 3.0 * u * a3); }

    // D is strictly increasing on [0,1]; safeguarded Newton for D(u) = w
    double invert(double w, double lo, double hi, double guess) const {
        double u = std::clamp(guess, lo, hi);
        for (int it = 0; it < 60; ++it) {
            const double f = value(u) - w;
            if (f > 0.0) hi = u; else lo = u;
            double next = u - f / slope(u);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - u) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(u, 1e-300)) return next;
            u = next;
            if (hi - lo <= 1e-300) break;
        }
        return u;
    }
};

template <class F>
inline void gauss_panel(double a, double b, F&& f, double& s0, double& s1, double& s2) {
    const auto& x = rule::abscissa();
    const auto& w = rule::weights();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double q0 = 0.0, q1 = 0.0, q2 = 0.0;
    auto add = [&](double node, double weight) {
        double v0, v1, v2;
        f(node, v0, v1, v2);
        q0 += weight * v0;
        q1 += weight * v1;
        q2 += weight * v2;
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] == 0.0) {
            add(mid, w[i]);
        } else {
            add(mid - half * x[i], w[i]);
            add(mid + half * x[i], w[i]);
        }
    }
    s0 += half * q0;
    s1 += half * q1;
    s2 += half * q2;
}

inline constexpr double exponent_cutoff = 50.0;

// Large linear rate with weak curvature: expand e^{-(a2 u^2 + a3 u^3)} and use
// int_0^inf e^{-a1 u} u^n du = n! / a1^{n+1}; the cut at u = 1 costs e^{-a1}.
inline bool series_moments(const BackwardExponent& D, Moments& m) {
    const double x = 1.0 / D.a1;
    const double e2 = D.a2 * x * x, e3 = D.a3 * x * x * x;
    if (std::abs(e2) > 1e-3 || std::abs(e3) > 1e-4) return false;
    double q0 = 0.0, q1 = 0.0, q2 = 0.0;
    // term(a, b) = (-e2)^a (-e3)^b (2a+3b)! / (a! b!), in units of x
    double row = 1.0;  // term(a, 0)
    for (int a = 0; a <= 16; ++a) {
        double term = row;
        for (int b = 0; b <= 16; ++b) {
            const int n = 2 * a + 3 * b;
            // (1-u)^j adds u^{n+1}, u^{n+2} moments: (n+1) x and (n+1)(n+2) x^2 relative
            const double r1 = (n + 1) * x, r2 = r1 * (n + 2) * x;
            q0 += term;
            q1 += term * (1.0 - r1);
            q2 += term * (1.0 - 2.0 * r1 + r2);
            term *= (-e3) * (n + 1) * (n + 2) * (n + 3) / (b + 1);
            if (std::abs(term) < 1e-18) break;
        }
        const int n = 2 * a;
        row *= (-e2) * (n + 1) * (n + 2) / (a + 1);
        if (std::abs(row) < 1e-18) break;
    }
    m.m0 = q0 * x;
    m.m1 = q1 * x;
    m.m2 = q2 * x;
    return true;
}

}  // namespace detail

inline Moments kernel_moments(const QuadraticDecay& d, double t0, double t1) {
    const double H = t1 - t0;
    if (d.nu == 0.0 || H <= 0.0) return {};
    const double W = d.exponent(t0, t1);
    Moments m;
    m.decay = std::exp(-W);

    const double s1 = d.eta - d.l * t1;
    const detail::BackwardExponent D{d.nu * (d.l * d.l + s1 * s1) * H, d.nu * d.l * s1 * H * H,
                                     d.nu * d.l * d.l * H * H * H / 3.0};

    // Curvature invisible on the part of [0,1] that carries weight: plain phi-functions.
    const double u_max = (D.a2 >= 0.0) ? std::min(1.0, detail::exponent_cutoff / D.a1) : 1.0;
    if (std::abs(D.a2) * u_max * u_max + D.a3 * u_max * u_max * u_max <= 1e-14) {
        double p1, p2, p3;
        phi_functions(-D.a1, p1, p2, p3);
        m.m0 = p1;
        m.m1 = p2;
        m.m2 = 2.0 * p3;
        return m;
    }

    if (D.a1 >= detail::exponent_cutoff && detail::series_moments(D, m)) return m;

    double s0 = 0.0, sa = 0.0, sb = 0.0;
    if (W <= 2.0) {
        // smooth kernel on u in [0,1]; sigma = 1 - u
        detail::gauss_panel(0.0, 1.0, [&](double u, double& v0, double& v1, double& v2) {
            const double k = std::exp(-D.value(u));
            const double sg = 1.0 - u;
            v0 = k;
            v1 = k * sg;
            v2 = k * sg * sg;
        }, s0, sa, sb);
    } else {
        // panels in u whose edges sit at fixed exponent levels; the integrand stays entire
        static constexpr std::array<double, 15> levels{0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0,
                                                       8.0, 12.0, 16.0, 24.0, 32.0, detail::exponent_cutoff};
        const double w_top = std::min(W, detail::exponent_cutoff);
        double u_lo = 0.0;
        for (std::size_t p = 0; p + 1 < levels.size() && levels[p] < w_top; ++p) {
            const double wa = levels[p], wb = std::min(levels[p + 1], w_top);
            const double u_hi = (wb >= W) ? 1.0 : D.invert(wb, u_lo, 1.0, u_lo + (wb - wa) / D.slope(u_lo));
            detail::gauss_panel(u_lo, u_hi, [&](double u, double& v0, double& v1, double& v2) {
                const double k = std::exp(-D.value(u));
                const double sg = 1.0 - u;
                v0 = k;
                v1 = k * sg;
                v2 = k * sg * sg;
            }, s0, sa, sb);
            u_lo = u_hi;
        }
    }
    m.m0 = s0;
    m.m1 = sa;
    m.m2 = sb;
    return m;
}

struct Options {
    double rtol = 1e-8;
    double atol = 1e-12;
    double h_min = 1e-12;  // relative to max(1, |t|)
    int order = 4;         // assumed local order for the doubling estimate
    // also hold every component to atol + rtol |y_i|; tighter than the norm test alone
    bool componentwise = true;
};

struct StepStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    double min_step = std::numeric_limits<double>::infinity();
    double max_step = 0.0;

    void merge(const StepStats& o) {
        accepted += o.accepted;
        rejected += o.rejected;
        min_step = std::min(min_step, o.min_step);
        max_step = std::max(max_step, o.max_step);
    }
};

template <class S>
concept LinearSystem = requires(const S& s, double t, std::span<const complex> y, std::span<complex> dy, std::size_t i) {
    { s.size() } -> std::convertible_to<std::size_t>;
    { s.decay(i) } -> std::convertible_to<QuadraticDecay>;
    { s.step_cap(t) } -> std::convertible_to<double>;
    s.nonstiff(t, y, dy);
};

inline double norm2(std::span<const complex> y) {
    double s = 0.0;
    for (const auto& z : y) s += std::norm(z);
    return std::sqrt(s);
}

template <LinearSystem Sys>
class KrogstadStepper {
public:
    explicit KrogstadStepper(const Sys& sys) : sys_(sys), n_(sys.size()) {
        for (std::size_t i = 0; i < n_; ++i) {
            decay_.push_back(sys.decay(i));
            if (decay_.back().nu != 0.0) stiff_.push_back(i);
        }
        for (auto* v : {&n1_, &n2_, &n3_, &n4_, &u_, &full_, &mid_, &half_}) v->assign(n_, complex{});
        for (auto* v : {&mq_, &mh_, &mf_, &mr_, &me_}) v->assign(n_, Moments{});
    }

    std::size_t size() const { return n_; }

    // Single step of length h without error control.
    void step(double t0, double h, std::span<const complex> y, std::span<complex> out) {
        fill_moments(mh_, t0, t0 + 0.5 * h);
        fill_moments(mf_, t0, t0 + h);
        step_with(t0, h, y, out, mh_, mf_);
    }

    // Advance y from t0 to t1 under error control; h carries the step suggestion in and out.
    void advance(double t0, double t1, std::vector<complex>& y, double& h, const Options& opt, StepStats& stats) {
        double t = t0;
        const double inv_order = 1.0 / (opt.order + 1);
        const double est_div = std::ldexp(1.0, opt.order) - 1.0;
        while (t < t1) {
            const double remaining = t1 - t;
            // below time resolution: nothing to integrate
            if (remaining <= opt.h_min * std::max(1.0, std::abs(t))) break;
            double step = std::min({h, sys_.step_cap(t), remaining});
            bool last = false;
            if (step >= remaining * (1.0 - 1e-12)) {
                step = remaining;
                last = true;
            }
            if (!(step > opt.h_min * std::max(1.0, std::abs(t))))
                throw NumericalError("step size underflow", t, step);

            const double tm = t + 0.5 * step, tn = last ? t1 : t + step;
            fill_moments(mq_, t, t + 0.25 * step);
            fill_moments(mh_, t, tm);
            fill_moments(mf_, t, tn);
            fill_moments(mr_, tm, tm + 0.25 * step);
            fill_moments(me_, tm, tn);
            step_with(t, step, y, full_, mh_, mf_);
            step_with(t, 0.5 * step, y, mid_, mq_, mh_);
            step_with(tm, tn - tm, mid_, half_, mr_, me_);

            double diff = 0.0;
            for (std::size_t i = 0; i < n_; ++i) diff += std::norm(half_[i] - full_[i]);
            const double err = std::sqrt(diff) / est_div;
            const double scale = std::max(norm2(y), norm2(half_));
            const double tol = std::max(opt.rtol * scale, opt.atol);
            if (!std::isfinite(err)) throw NumericalError("non-finite state", t, err);
            double ratio = err / tol;
            if (opt.componentwise)
                for (std::size_t i = 0; i < n_; ++i) {
                    const double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(half_[i]));
                    ratio = std::max(ratio, std::abs(half_[i] - full_[i]) / est_div / sc);
                }

            double factor = (ratio == 0.0) ? 4.0 : 0.9 * std::pow(1.0 / ratio, inv_order);
            factor = std::clamp(factor, 0.2, 4.0);
            if (ratio <= 1.0) {
                y.swap(half_);
                t = tn;
                ++stats.accepted;
                stats.min_step = std::min(stats.min_step, step);
                stats.max_step = std::max(stats.max_step, step);
                // a clipped step says nothing about the natural size
                if (step >= h * 0.999) h = step * factor;
            } else {
                ++stats.rejected;
                h = step * std::min(factor, 0.9);
                if (!(h > opt.h_min * std::max(1.0, std::abs(t))))
                    throw NumericalError("step size underflow, error estimate " + std::to_string(err), t, err);
            }
        }
    }

private:
    void fill_moments(std::vector<Moments>& m, double a, double b) const {
        for (std::size_t i : stiff_) m[i] = kernel_moments(decay_[i], a, b);
    }

    void step_with(double t0, double h, std::span<const complex> y, std::span<complex> out,
                   const std::vector<Moments>& mh, const std::vector<Moments>& mf) {
        const double hh = 0.5 * h;
        sys_.nonstiff(t0, y, n1_);
        for (std::size_t i = 0; i < n_; ++i) u_[i] = mh[i].decay * y[i] + hh * mh[i].m0 * n1_[i];
        sys_.nonstiff(t0 + hh, u_, n2_);
        for (std::size_t i = 0; i < n_; ++i)
            u_[i] = mh[i].decay * y[i] + hh * mh[i].m0 * n1_[i] + h * mh[i].m1 * (n2_[i] - n1_[i]);
        sys_.nonstiff(t0 + hh, u_, n3_);
        for (std::size_t i = 0; i < n_; ++i)
            u_[i] = mf[i].decay * y[i] + h * mf[i].m0 * n1_[i] + 2.0 * h * mf[i].m1 * (n3_[i] - n1_[i]);
        sys_.nonstiff(t0 + h, u_, n4_);
        for (std::size_t i = 0; i < n_; ++i) {
            const Moments& m = mf[i];
            out[i] = m.decay * y[i] + h * ((m.m0 - 3.0 * m.m1 + 2.0 * m.m2) * n1_[i] +
                                           (2.0 * m.m1 - 2.0 * m.m2) * (n2_[i] + n3_[i]) +
                                           (2.0 * m.m2 - m.m1) * n4_[i]);
        }
    }

    const Sys& sys_;
    std::size_t n_;
    std::vector<QuadraticDecay> decay_;
    std::vector<std::size_t> stiff_;
    std::vector<complex> n1_, n2_, n3_, n4_, u_, full_, mid_, half_;
    std::vector<Moments> mq_, mh_, mf_, mr_, me_;
};

}  // namespace echochain::etd

#endif
