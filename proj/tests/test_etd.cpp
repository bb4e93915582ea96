#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <echochain/etd.hpp>

using namespace echochain;
using namespace echochain::etd;
using Catch::Approx;

namespace {

// D(t1 - u, t1) in the lag u, expanded about t1 so nothing cancels
double lag_exponent(const QuadraticDecay& d, double t1, double u) {
    const double e = d.eta - d.l * t1;
    return d.nu * (d.l * d.l * u + e * e * u + e * d.l * u * u + d.l * d.l * u * u * u / 3.0);
}

// m_j by Gauss-Kronrod on panels cut where the exponent crosses geometric levels
double oracle_moment(const QuadraticDecay& d, double t0, double t1, int j) {
    const double H = t1 - t0;
    auto D = [&](double s) { return lag_exponent(d, t1, (1.0 - s) * H); };
    std::vector<double> edges{1.0};
    const double W = D(0.0);
    for (double lev = 0.05; lev < std::min(W, 60.0); lev *= 1.15) {
        double lo = 0.0, hi = 1.0;
        for (int b = 0; b < 200; ++b) {
            const double mid = 0.5 * (lo + hi);
            (D(mid) > lev ? lo : hi) = mid;
        }
        edges.push_back(0.5 * (lo + hi));
    }
    edges.push_back(0.0);
    double ref = 0.0;
    auto f = [&](double s) { return std::exp(-D(s)) * std::pow(s, j); };
    for (std::size_t p = 0; p + 1 < edges.size(); ++p)
        ref += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, edges[p + 1], edges[p], 0, 0);
    return ref;
}

struct ScalarDecay {
    QuadraticDecay d;
    double b = 0.0;
    std::size_t size() const { return 1; }
    QuadraticDecay decay(std::size_t) const { return d; }
    double step_cap(double) const { return 1.0; }
    void nonstiff(double, std::span<const complex> y, std::span<complex> dy) const { dy[0] = b * y[0]; }
};

// y1' = -a y1 + w y2, y2' = -w y1, with constant a carried by the kernel
struct Rotor {
    double a = 2.0, w = 3.0;
    std::size_t size() const { return 2; }
    QuadraticDecay decay(std::size_t i) const {
        if (i == 0) return {a, 0.0, 1.0};
        return {};
    }
    double step_cap(double) const { return 10.0; }
    void nonstiff(double, std::span<const complex> y, std::span<complex> dy) const {
        dy[0] = w * y[1];
        dy[1] = -w * y[0];
    }
};

struct Exploder {
    std::size_t size() const { return 1; }
    QuadraticDecay decay(std::size_t) const { return {}; }
    double step_cap(double) const { return 1.0; }
    void nonstiff(double, std::span<const complex> y, std::span<complex> dy) const { dy[0] = 1e300 * y[0] * y[0]; }
};

}  // namespace

TEST_CASE("closed-form exponent") {
    CHECK(QuadraticDecay{1.0, 1.0, 0.0}.exponent(0.0, 1.0) == Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(QuadraticDecay{2.0, 2.0, 4.0}.exponent(0.0, 2.0) == Approx(2.0 * (8.0 + 64.0 / 6.0)).epsilon(1e-15));
    CHECK(QuadraticDecay{1.0, 3.0, 5.0}.exponent(2.0, 2.0) == 0.0);
    const QuadraticDecay d{0.7, 3.0, 1e4};
    CHECK(d.exponent(3000.0, 3400.0) == Approx(lag_exponent(d, 3400.0, 400.0)).epsilon(1e-13));
}

TEST_CASE("phi functions against their closed forms") {
    for (double z : {-40.0, -3.0, -0.7, -0.3, -1e-3, 0.2, 1.0}) {
        double p1, p2, p3;
        phi_functions(z, p1, p2, p3);
        if (std::abs(z) >= 0.1) {
            const double e = std::exp(z);
            CHECK(p1 == Approx((e - 1.0) / z).epsilon(1e-13));
            CHECK(p2 == Approx((e - 1.0 - z) / (z * z)).epsilon(1e-12));
            CHECK(p3 == Approx((e - 1.0 - z - z * z / 2.0) / (z * z * z)).epsilon(1e-11));
        } else {
            CHECK(p1 == Approx(1.0 + z / 2.0 + z * z / 6.0).epsilon(1e-8));
            CHECK(p2 == Approx(0.5 + z / 6.0 + z * z / 24.0).epsilon(1e-8));
            CHECK(p3 == Approx(1.0 / 6.0 + z / 24.0 + z * z / 120.0).epsilon(1e-8));
        }
    }
}

TEST_CASE("kernel moments without decay are the plain monomial integrals") {
    const Moments m = kernel_moments({}, 3.0, 4.0);
    CHECK(m.decay == 1.0);
    CHECK(m.m0 == Approx(1.0));
    CHECK(m.m1 == Approx(0.5));
    CHECK(m.m2 == Approx(1.0 / 3.0));
}

TEST_CASE("kernel moments match panelled quadrature over random kernels") {
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double worst = 0.0;
    for (int it = 0; it < 3000; ++it) {
        QuadraticDecay d{std::pow(10.0, -2.0 + 3.0 * U(rng)), static_cast<double>(1 + static_cast<int>(40 * U(rng))),
                         std::pow(10.0, 5.0 * U(rng))};
        if (U(rng) < 0.2) d.eta = 0.0;
        const double centre = d.eta / d.l;
        const double t0 = std::max(0.0, centre + (U(rng) - 0.5) * std::pow(10.0, 2.0 * U(rng) - 1.0) * 4.0);
        const double t1 = t0 + std::pow(10.0, -3.0 + 4.0 * U(rng));
        const Moments m = kernel_moments(d, t0, t1);
        const double got[3] = {m.m0, m.m1, m.m2};
        for (int j = 0; j < 3; ++j) {
            const double ref = oracle_moment(d, t0, t1, j);
            worst = std::max(worst, std::abs(got[j] - ref) / std::max(std::abs(ref), 1e-300));
        }
        const double W = lag_exponent(d, t1, t1 - t0);
        if (W < 700.0) CHECK(std::abs(-std::log(m.decay) - W) <= 1e-12 * std::max(1.0, W));
    }
    INFO("worst relative moment error " << worst);
    CHECK(worst < 1e-11);
}

TEST_CASE("pure decay is reproduced to round-off") {
    const ScalarDecay sys{{0.5, 3.0, 40.0}, 0.0};
    KrogstadStepper st(sys);
    std::vector<complex> y{complex{1.0, -2.0}};
    double h = 0.1;
    StepStats stats;
    st.advance(10.0, 16.0, y, h, {1e-10, 1e-14}, stats);
    const complex want = complex{1.0, -2.0} * std::exp(-sys.d.exponent(10.0, 16.0));
    CHECK(std::abs(y[0] - want) <= 1e-12 * std::abs(want));
}

TEST_CASE("decay plus constant growth") {
    const ScalarDecay sys{{0.2, 1.0, 5.0}, 0.7};
    KrogstadStepper st(sys);
    std::vector<complex> y{complex{1.0}};
    double h = 0.1;
    StepStats stats;
    st.advance(0.0, 8.0, y, h, {1e-11, 1e-15}, stats);
    const double want = std::exp(-sys.d.exponent(0.0, 8.0) + 0.7 * 8.0);
    CHECK(y[0].real() == Approx(want).epsilon(1e-8));
    CHECK(stats.accepted > 0);
}

TEST_CASE("zero state stays zero") {
    const Rotor sys;
    KrogstadStepper st(sys);
    std::vector<complex> y(2);
    double h = 0.1;
    StepStats stats;
    st.advance(0.0, 5.0, y, h, {1e-8, 1e-12}, stats);
    CHECK(y[0] == complex{});
    CHECK(y[1] == complex{});
}

TEST_CASE("single-step local error is fourth order or better") {
    const Rotor sys;
    KrogstadStepper st(sys);
    auto local_error = [&](double h) {
        std::vector<complex> y{complex{1.0}, complex{0.5}}, out(2), ref = y;
        st.step(0.0, h, y, out);
        double hh = h / 64.0;
        StepStats s;
        st.advance(0.0, h, ref, hh, {1e-14, 1e-16}, s);
        return std::abs(out[0] - ref[0]) + std::abs(out[1] - ref[1]);
    };
    const double e1 = local_error(0.2), e2 = local_error(0.1);
    INFO("errors " << e1 << " " << e2);
    CHECK(e1 / e2 > 16.0);
}

TEST_CASE("blow-up surfaces as a numerical error") {
    const Exploder sys;
    KrogstadStepper st(sys);
    std::vector<complex> y{complex{1.0}};
    double h = 0.5;
    StepStats stats;
    CHECK_THROWS_AS(st.advance(0.0, 10.0, y, h, {1e-8, 1e-12}, stats), NumericalError);
}
