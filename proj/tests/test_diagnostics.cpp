#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <echochain/diagnostics.hpp>

using namespace echochain;
using Catch::Approx;

namespace {

// int (1+s^2)^{-2} ds over [s, inf) for |s| >= 10, as a series in u = 1/s:
// sum_{n>=1} (-1)^{n+1} n/(2n+1) u^{2n+1}
double squared_tail(double s) {
    const double u = 1.0 / s, u2 = u * u;
    double term = u * u2, sum = 0.0;
    for (int n = 1; n <= 12; ++n, term *= -u2) sum += n / (2.0 * n + 1.0) * term;
    return sum;
}

// exact integral of the c (power 2) or d (power 1) kernel in s = eta/m - t
double kernel_integral_exact(int l, Branch br, double t0, double t1, double c, double eta, int power) {
    const int m = br == Branch::plus ? l + 1 : l - 1;
    const double md = m, pre = c * eta / (md * md * md);
    const double a = eta / md - t0, b = eta / md - t1;  // integral is over s in [b, a]
    // differences rewritten so nothing cancels away from the peak
    const double datan = (a * b > -1.0) ? std::atan((a - b) / (1.0 + a * b)) : std::atan(a) - std::atan(b);
    if (power == 1) return pre * datan;
    if (b >= 10.0) return pre * (squared_tail(b) - squared_tail(a));
    if (a <= -10.0) return pre * (squared_tail(-a) - squared_tail(-b));
    const double drat = (a - b) * (1.0 - a * b) / ((1.0 + a * a) * (1.0 + b * b));
    return pre * 0.5 * (drat + datan);
}

// c = 0: theta is frozen, G only decays or is forced by theta
Trajectory frozen_run(const std::vector<double>& theta, double t_start = 0.0) {
    SimConfig cfg;
    cfg.eta = 100.0;
    cfg.L = static_cast<int>(theta.size());
    cfg.t_start = t_start;
    cfg.t_end = 250.0;
    cfg.init.kind = InitKind::file;
    for (double v : theta) cfg.init.theta.emplace_back(v);
    cfg.init.G.assign(theta.size(), 0.0);
    cfg.truncation_check = false;
    cfg.f_source = FSource::zero;
    return integrate(cfg, make_params_unchecked(0.5, 0.0, 0.0), initial_state(cfg));
}

}  // namespace

TEST_CASE("regime thresholds") {
    const auto a = thresholds(0.001, 125.0 / pi * 1000.0);
    CHECK(a.k0 == 5);
    CHECK(a.k1 == 20);
    CHECK(a.k2 == 1);
    CHECK(a.k3 == 1);
    CHECK_FALSE(a.all_stable);

    // integer cube brackets: 146^3 <= pi 1e6 < 147^3
    const auto b = thresholds(1.0, 1e6);
    REQUIRE(146.0 * 146.0 * 146.0 <= pi * 1e6);
    REQUIRE(147.0 * 147.0 * 147.0 > pi * 1e6);
    CHECK(b.k0 == 146);
    CHECK(b.k1 == 584);
    CHECK(b.k2 == 14);

    const auto v = thresholds(0.001, 125.0 / pi * 1000.0, {4.0, 0.1, 0.001, true});
    CHECK(v.k1 == static_cast<int>(std::floor(20.0 * std::cbrt(125.0 / pi))));

    const auto s = thresholds(0.001, 100.0, {}, 6);
    CHECK(s.all_stable);
    REQUIRE(s.t_k.size() == 7);
    CHECK(s.t_k[0] == 200.0);
    CHECK(s.t_k[4] == Approx(22.5));
}

TEST_CASE("weighted norms") {
    std::vector<complex> d3(5), d4(5);
    d3[2] = 1.0;
    d4[3] = 1.0;
    CHECK(norm_X(d3, {WeightKind::uniform, 0}) == 1.0);
    CHECK(norm_X(d3, {WeightKind::analytic, 0}) == 8.0);
    CHECK(norm_X(d4, {WeightKind::sobolev, 2}) == 5.0);
    CHECK(norm_X(std::vector<complex>{3.0, complex(0.0, 4.0)}, {}) == 5.0);
}

TEST_CASE("full-line Lorentzian integrals") {
    double err = 0.0;
    CHECK(std::abs(lorentzian_line_integral(2, &err) - pi / 2.0) <= 1e-8);
    CHECK(err < 1e-8);
    CHECK(std::abs(lorentzian_line_integral(1) - pi) <= 1e-8);
    // the antiderivatives reach the same limits
    CHECK(lorentzian_antiderivative(2, 1e300) - lorentzian_antiderivative(2, -1e300) == Approx(pi / 2.0).epsilon(1e-15));
    CHECK(lorentzian_antiderivative(1, 1e300) - lorentzian_antiderivative(1, -1e300) == Approx(pi).epsilon(1e-15));
}

TEST_CASE("coefficient integrals match the antiderivatives") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int i = 0; i < 60; ++i) {
        const int l = 1 + static_cast<int>(U(rng) * 12);
        const Branch br = (i % 2) ? Branch::plus : Branch::minus;
        const double eta = std::pow(10.0, 2.0 + 3.0 * U(rng)), c = 0.001;
        const int m = br == Branch::plus ? l + 1 : l - 1;
        if (m == 0) continue;
        const double t0 = eta / m * (0.5 + U(rng)), t1 = t0 + eta / m * U(rng);
        for (int power : {1, 2}) {
            const double got = coefficient_integral(l, br, t0, t1, c, eta, 1e-16, power == 2 ? CoeffKind::c : CoeffKind::d);
            const double want = kernel_integral_exact(l, br, t0, t1, c, eta, power);
            INFO("l " << l << " t0 " << t0 << " t1 " << t1 << " eta " << eta << " rel " << (got - want) / want);
            CHECK(std::abs(got - want) <= 1e-9 * std::abs(want) + 1e-300);
        }
    }
    CHECK(coefficient_integral(3, Branch::plus, 7.0, 7.0, 0.001, 100.0, 1e-12) == 0.0);
    CHECK(coefficient_integral(1, Branch::minus, 0.0, 7.0, 0.001, 100.0, 1e-12) == 0.0);
    CHECK_THROWS_AS(coefficient_integral(3, Branch::plus, 8.0, 7.0, 0.001, 100.0, 1e-12), ConfigError);
}

TEST_CASE("resonant coefficient integral over its interval") {
    CHECK(resonant_integral_check(1, 0.001, 1e5).reason == "k_below_2");
    CHECK(resonant_integral_check(4, 0.001, 1500.0).reason == "eta_over_k2_below_100");
    for (int k : {2, 3, 4}) {
        const double eta = 39789.0;
        const auto r = resonant_integral_check(k, 0.001, eta);
        REQUIRE(r.evaluated);
        const double kd = k;
        const double exact = kernel_integral_exact(k - 1, Branch::plus, resonant_time(eta, k), resonant_time(eta, k - 1),
                                                   0.001, eta, 2) /
                             (0.001 * eta * pi / (2.0 * kd * kd * kd));
        CHECK(r.ratio == Approx(exact).epsilon(1e-10));
        CHECK(r.pass);
    }
}

TEST_CASE("non-resonant coefficient rows") {
    const auto r = nonresonant_coefficient_check(4, 1, Branch::plus, 0.001, 39789.0);
    const double want = kernel_integral_exact(1, Branch::plus, resonant_time(39789.0, 4), resonant_time(39789.0, 3),
                                              0.001, 39789.0, 2);
    CHECK(r.integral == Approx(want).epsilon(1e-9));
    CHECK(r.slack == r.bound - r.integral);
    CHECK(r.bound == Approx(4.0 * 0.001 / 4.0 / std::pow(39789.0 / 16.0, 2)).epsilon(1e-15));
}

TEST_CASE("small-frequency multiplier") {
    CHECK(multiplier_small(3.0, 2, 50.0, 0.0) == 1.0);
    CHECK(multiplier_small(1e15, 2, 50.0) == Approx(std::exp(-3.0 * 0.01 * pi / 2.0)).epsilon(1e-12));
    const double eta = 120.0;
    const int l = 3;
    const double t = eta / l;
    CHECK(multiplier_small(t, l, eta) ==
          Approx(std::exp(0.01 * (std::atan(eta / (l - 1) - t) + std::atan(eta / (l + 1) - t)))).epsilon(1e-15));
    // mode 1 drops the l' = 0 term
    CHECK(multiplier_small(5.0, 1, 50.0) == Approx(std::exp(0.01 * (std::atan(45.0) + std::atan(20.0)))).epsilon(1e-15));
}

TEST_CASE("intermediate-regime multiplier") {
    const double eta = 1e4;
    for (int k : {2, 5, 9}) {
        const double tk = resonant_time(eta, k), tkm = resonant_time(eta, k - 1);
        CHECK(multiplier_intermediate(tk, k, eta) == 1.0);
        for (int i = 0; i <= 50; ++i) CHECK(multiplier_intermediate(tk + (tkm - tk) * i / 50.0, k, eta) >= std::exp(-3.0 * pi));
        CHECK_THROWS_AS(multiplier_intermediate(tk - 1.0, k, eta), ConfigError);
    }
    CHECK(multiplier_intermediate(1e8 / 2.0, 2, 1e8) == Approx(std::exp(-1.5 * pi)).epsilon(1e-6));
}

TEST_CASE("multiplier energy") {
    ModeState s(0.0, 4);
    const std::vector<double> ones(4, 1.0);
    CHECK(energy(s, {}, ones) == 0.0);
    s.th(2) = 1.0;
    CHECK(energy(s, {}, ones) == 1600.0);
    s.gu(1) = 2.0;
    CHECK(energy(s, {}, ones) == 1604.0);
    CHECK_THROWS_AS(energy(s, {}, {1.0, 0.0, 1.0, 1.0}), ConfigError);
}

TEST_CASE("echo gains on frozen dynamics") {
    const Trajectory tr = frozen_run({1.0, 2.0, 3.0, 4.0, 0.5, 0.0});
    const EchoGain g = echo_gain(tr, 3);
    CHECK(g.minus.value() == Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(g.plus.value() == Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK_FALSE(echo_gain(tr, 1).minus.has_value());
    CHECK(echo_gain(tr, 5).plus.has_value());
    CHECK_THROWS_AS(echo_gain(tr, 6), NumericalError);
    CHECK_THROWS_AS(echo_gain(tr, 0), ConfigError);

    const auto rep = chain_report(tr, tr.params, {});
    CHECK(rep.records.empty());
    CHECK(rep.total_inflation == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("echo gain needs samples at the resonant times") {
    SimConfig cfg;
    cfg.eta = 100.0;
    cfg.L = 5;
    cfg.t_start = 0.0;
    cfg.t_end = 30.0;
    cfg.f_source = FSource::zero;
    const Trajectory tr = integrate(cfg, make_params_unchecked(0.5, 0.0, 0.0), initial_state(cfg));
    // t_1 = 75 lies beyond the run
    CHECK_THROWS_AS(echo_gain(tr, 2), ConfigError);
}

TEST_CASE("persistence on frozen dynamics") {
    const Trajectory tr = frozen_run({1.0, 0.0, 2.0, 0.0, 0.0});
    const auto r = persistence_check(tr, 1);
    CHECK(r.mode == 3);
    CHECK(r.min_ratio == Approx(1.0).epsilon(1e-15));
    CHECK(r.precondition);
    CHECK_THROWS_AS(persistence_check(frozen_run({1.0, 2.0, 0.0, 0.0, 0.0}), 1), NumericalError);
    CHECK_THROWS_AS(persistence_check(tr, 4), ConfigError);
}

TEST_CASE("bootstrap slacks at the start of the interval") {
    const int k = 2;
    const double eta = 2000.0, tk = resonant_time(eta, k);
    SimConfig cfg;
    cfg.eta = eta;
    cfg.L = 6;
    cfg.t_start = tk;
    cfg.t_end = tk + 1.0;
    cfg.init.mode = k;
    const auto p = validate_params({1.0, 0.001, 0.0});
    const Trajectory tr = integrate(cfg, p, initial_state(cfg));
    const auto rep = bootstrap_check(tr, k, {tk});
    REQUIRE(rep.records.size() == 1);
    for (const auto& b : rep.records[0].B) {
        INFO(b.name);
        CHECK(b.holds);
        CHECK(b.slack == b.bound);
    }
    const double ratio = eta / 4.0;
    CHECK(rep.records[0].B[0].bound == Approx(10.0 * 0.001 / k / ratio));
    CHECK(rep.records[0].B[3].bound == Approx(2.0 / k));

    SimConfig bad = cfg;
    bad.init.amplitude = 2.0;
    CHECK_THROWS_AS(bootstrap_check(integrate(bad, p, initial_state(bad)), k, {tk}), ConfigError);
    SimConfig late = cfg;
    late.t_start = tk + 0.5;
    CHECK_THROWS_AS(bootstrap_check(integrate(late, p, initial_state(late)), k, {tk + 1.0}), ConfigError);
}

TEST_CASE("resonance separation") {
    for (double eta : {1e3, 4e4, 1e6})
        for (int k = 2; k <= 8; ++k)
            for (int l = 1; l <= 12; ++l)
                if (l != k) CHECK(separation_margin(eta, k, l) >= 0.0);
}

TEST_CASE("cube-root regression") {
    std::vector<std::pair<double, double>> cube, sq;
    for (double x : {20.0, 60.0, 150.0, 400.0, 900.0, 2000.0}) {
        cube.emplace_back(x, std::exp(2.0 * std::cbrt(x)));
        sq.emplace_back(x, std::exp(std::sqrt(x)));
    }
    const FitReport a = fit_cube_root(cube);
    CHECK(a.regressors[0].fit.slope == Approx(2.0).margin(1e-9));
    CHECK(a.regressors[0].fit.intercept == Approx(0.0).margin(1e-8));
    CHECK(a.regressors[0].fit.r_squared == Approx(1.0).margin(1e-12));
    CHECK(a.cube_root_wins());
    CHECK(a.winner == 0);

    const FitReport b = fit_cube_root(sq);
    CHECK_FALSE(b.cube_root_wins());
    CHECK(b.winner == 1);

    CHECK_THROWS_AS(fit_cube_root({cube.begin(), cube.begin() + 4}), ConfigError);
    std::vector<std::pair<double, double>> flat(6, {50.0, 3.0});
    CHECK_THROWS_AS(fit_cube_root(flat), ConfigError);
    cube[2].second = 0.5;
    CHECK_THROWS_AS(fit_cube_root(cube), ConfigError);
}
