#ifndef ECHOCHAIN_CORE_MODEL_HPP
#define ECHOCHAIN_CORE_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace echochain {

using complex = std::complex<double>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// exit code 2
class ConfigError : public Error {
public:
    using Error::Error;
};

// exit code 3
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double time, double estimate = 0.0)
        : Error(what + " (t=" + std::to_string(time) + ")"), time_(time), estimate_(estimate) {}
    double time() const noexcept { return time_; }
    double estimate() const noexcept { return estimate_; }

private:
    double time_;
    double estimate_;
};

class TruncationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// exit code 4
class CheckFailure : public Error {
public:
    using Error::Error;
};

inline constexpr double theorem_c_max = 0.001;
inline constexpr double accepted_c_max = 0.01;

struct ParamRecord {
    double nu = 0.0;
    double c = 0.0;
    double alpha = 0.0;
};

struct PhysicalParams {
    double nu = 0.0;
    double c = 0.0;
    double g = 0.0;
    double alpha = 0.0;
    bool theorem_range_exceeded = false;

    ParamRecord record() const { return {nu, c, alpha}; }
    bool operator==(const PhysicalParams&) const = default;
};

inline PhysicalParams validate_params(const ParamRecord& raw) {
    if (!std::isfinite(raw.nu) || !std::isfinite(raw.c) || !std::isfinite(raw.alpha))
        throw ConfigError("physical parameters must be finite");
    if (raw.nu <= 0.0) throw ConfigError("nu must be > 0, got " + std::to_string(raw.nu));
    if (raw.c <= 0.0) throw ConfigError("c must be > 0, got " + std::to_string(raw.c));
    if (raw.c > accepted_c_max)
        throw ConfigError("c must be <= 0.01, got " + std::to_string(raw.c));
    PhysicalParams p;
    p.nu = raw.nu;
    p.c = raw.c;
    p.alpha = raw.alpha;
    p.g = 2.0 * raw.c * raw.nu;
    p.theorem_range_exceeded = raw.c > theorem_c_max;
    return p;
}

// Unvalidated params, used by degenerate (c = 0) oracles and tests only.
inline PhysicalParams make_params_unchecked(double nu, double c, double alpha = 0.0) {
    return PhysicalParams{nu, c, 2.0 * c * nu, alpha, c > theorem_c_max};
}

enum class WeightKind { uniform, sobolev, analytic };

struct WeightSpec {
    WeightKind kind = WeightKind::uniform;
    int N = 0;
};

inline double weight_eval(const WeightSpec& w, int l) {
    const double al = std::abs(static_cast<double>(l));
    switch (w.kind) {
    case WeightKind::uniform: return 1.0;
    case WeightKind::sobolev: return 1.0 + std::ldexp(std::pow(al, w.N), -w.N);
    case WeightKind::analytic: return std::ldexp(1.0, static_cast<int>(al));
    }
    return 1.0;
}

// Largest neighbour ratio max(λ(l+1)/λ(l), λ(l)/λ(l+1)) over 1..L.
inline double weight_neighbour_ratio(const WeightSpec& w, int L) {
    double worst = 1.0;
    for (int l = 1; l < L; ++l) {
        const double a = weight_eval(w, l), b = weight_eval(w, l + 1);
        worst = std::max({worst, b / a, a / b});
    }
    return worst;
}

enum class FSource { ode, decay_bound, zero };

enum class InitKind { delta_theta, delta_G, file };

struct InitSpec {
    InitKind kind = InitKind::delta_theta;
    int mode = 1;
    complex amplitude{1.0, 0.0};
    // kind == file: explicit amplitudes for l = 1..L
    std::vector<complex> theta;
    std::vector<complex> G;
};

struct SimConfig {
    double eta = 0.0;
    int L = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    double rtol = 1e-8;
    double atol = 1e-12;
    FSource f_source = FSource::ode;
    InitSpec init;
    std::vector<double> sample_times;
    bool g_forcing_per_l = false;
    // boundary-reach check at mode L; off only for oracle comparisons with full-spectrum data
    bool truncation_check = true;
};

struct ModeState {
    double t = 0.0;
    std::vector<complex> theta;  // theta[l-1] is mode l
    std::vector<complex> G;

    ModeState() = default;
    ModeState(double time, int L) : t(time), theta(static_cast<std::size_t>(L)), G(static_cast<std::size_t>(L)) {}

    int L() const { return static_cast<int>(theta.size()); }
    complex& th(int l) { return theta[static_cast<std::size_t>(l - 1)]; }
    complex th(int l) const { return theta[static_cast<std::size_t>(l - 1)]; }
    complex& gu(int l) { return G[static_cast<std::size_t>(l - 1)]; }
    complex gu(int l) const { return G[static_cast<std::size_t>(l - 1)]; }

    bool finite() const {
        for (std::size_t i = 0; i < theta.size(); ++i)
            if (!std::isfinite(theta[i].real()) || !std::isfinite(theta[i].imag()) ||
                !std::isfinite(G[i].real()) || !std::isfinite(G[i].imag()))
                return false;
        return true;
    }
};

inline double l2_norm(const std::vector<complex>& u) {
    double s = 0.0;
    for (const auto& z : u) s += std::norm(z);
    return std::sqrt(s);
}

inline double state_norm(const ModeState& s) {
    double acc = 0.0;
    for (const auto& z : s.theta) acc += std::norm(z);
    for (const auto& z : s.G) acc += std::norm(z);
    return std::sqrt(acc);
}

struct ThresholdFactors {
    double a1 = 4.0;
    double a2 = 0.1;
    double a3 = 0.001;
    // k1 = floor(20·∛(cη)) instead of floor(a1·k0)
    bool k1_stability_variant = false;
};

struct RegimeThresholds {
    int k0 = 0, k1 = 0, k2 = 0, k3 = 0;
    ThresholdFactors factors;
    bool all_stable = false;
    std::vector<double> t_k;  // t_k[k], k = 0..L
};

// t_k = (eta/(k+1) + eta/k)/2, t_0 = 2 eta
inline double resonant_time(double eta, int k) {
    if (k == 0) return 2.0 * eta;
    return 0.5 * (eta / (k + 1) + eta / k);
}

inline int resonant_mode_count_bound(double c, double eta) {
    return static_cast<int>(std::ceil(4.0 * std::cbrt(c * eta * std::numbers::pi)));
}

}  // namespace echochain

#endif
