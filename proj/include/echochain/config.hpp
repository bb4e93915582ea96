#ifndef ECHOCHAIN_CONFIG_HPP
#define ECHOCHAIN_CONFIG_HPP

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <toml.hpp>

#include "core_model.hpp"
#include "io.hpp"

namespace echochain {

enum class Command { wave, simulate, echo_report, sweep, blowup, check_coeffs };

inline std::string command_name(Command c) {
    switch (c) {
    case Command::wave: return "wave";
    case Command::simulate: return "simulate";
    case Command::echo_report: return "echo-report";
    case Command::sweep: return "sweep";
    case Command::blowup: return "blowup";
    case Command::check_coeffs: return "check-coeffs";
    }
    return "?";
}

struct WaveBlock {
    int k = 1;
    double f0 = 0.0;
    double g0 = 1.0;
    double t_min = 0.0;
    double t_max = 100.0;
    int points = 201;
    bool log_grid = false;
    std::vector<double> fit_alphas;
    double fit_t_lo = 1e2;
    double fit_t_hi = 1e4;
};

struct EchoBlock {
    std::optional<int> bootstrap_k;
    int bootstrap_points = 8;
    bool write_trajectory = true;
};

struct SweepBlock {
    std::vector<int> k0;
    std::vector<double> eta;
    std::string init_at = "k0";  // k0 | k2
    int L_min = 12;
    int L_pad = 4;
    std::optional<double> synthetic_slope;
    double synthetic_intercept = 0.0;
};

struct BlowupBlock {
    double sigma = 1.0;
    std::vector<double> eta;
    double margin = 0.2;
    int samples = 200;
    int grid_points = 401;
    int L_min = 12;
    int L_pad = 4;
    bool require_viscous_condition = true;
};

struct CheckCoeffsBlock {
    std::vector<int> k;
    int window = 3;
};

struct RunConfig {
    Command command = Command::simulate;
    std::filesystem::path source;
    PhysicalParams params;
    SimConfig sim;
    WeightSpec weight;
    ThresholdFactors factors;
    WaveBlock wave;
    EchoBlock echo;
    SweepBlock sweep;
    BlowupBlock blowup;
    CheckCoeffsBlock check_coeffs;
};

namespace detail {

// Tracks which keys were read so leftovers can be rejected.
class TableReader {
public:
    TableReader(const toml::table& t, std::string where) : t_(&t), where_(std::move(where)) {}

    bool has(const std::string& key) const { return t_->contains(key); }

    std::optional<double> number(const std::string& key) {
        const toml::node* n = take(key);
        if (!n) return std::nullopt;
        if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer())) return *v;
        fail(key, "expected a number");
    }
    double require_number(const std::string& key) {
        auto v = number(key);
        if (!v) fail(key, "is required");
        return *v;
    }
    std::optional<int> integer(const std::string& key) {
        const toml::node* n = take(key);
        if (!n) return std::nullopt;
        if (!n->is_integer()) fail(key, "expected an integer");
        return static_cast<int>(*n->value<std::int64_t>());
    }
    int require_integer(const std::string& key) {
        auto v = integer(key);
        if (!v) fail(key, "is required");
        return *v;
    }
    std::optional<bool> boolean(const std::string& key) {
        const toml::node* n = take(key);
        if (!n) return std::nullopt;
        if (!n->is_boolean()) fail(key, "expected true or false");
        return *n->value<bool>();
    }
    std::optional<std::string> string(const std::string& key) {
        const toml::node* n = take(key);
        if (!n) return std::nullopt;
        if (!n->is_string()) fail(key, "expected a string");
        return *n->value<std::string>();
    }
    std::optional<std::vector<double>> numbers(const std::string& key) {
        const toml::node* n = take(key);
        if (!n) return std::nullopt;
        const toml::array* a = n->as_array();
        if (!a) fail(key, "expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : *a) {
            if (!(e.is_floating_point() || e.is_integer())) fail(key, "expected an array of numbers");
            out.push_back(*e.value<double>());
        }
        return out;
    }
    std::optional<std::vector<int>> integers(const std::string& key) {
        const toml::node* n = take(key);
        if (!n) return std::nullopt;
        const toml::array* a = n->as_array();
        if (!a) fail(key, "expected an array of integers");
        std::vector<int> out;
        for (const auto& e : *a) {
            if (!e.is_integer()) fail(key, "expected an array of integers");
            out.push_back(static_cast<int>(*e.value<std::int64_t>()));
        }
        return out;
    }
    std::optional<TableReader> table(const std::string& key) {
        const toml::node* n = take(key);
        if (!n) return std::nullopt;
        if (!n->is_table()) fail(key, "expected a table");
        return TableReader(*n->as_table(), where_.empty() ? key : where_ + "." + key);
    }

    void finish() const {
        for (const auto& [k, v] : *t_) {
            const std::string name(k.str());
            if (!used_.count(name))
                throw ConfigError("unknown key '" + qualified(name) + "'" + location(v));
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const toml::node* n = t_->get(key);
        throw ConfigError("'" + qualified(key) + "' " + msg + (n ? location(*n) : std::string{}));
    }

private:
    const toml::node* take(const std::string& key) {
        used_.insert(key);
        return t_->get(key);
    }
    std::string qualified(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }
    static std::string location(const toml::node& n) {
        const auto& s = n.source();
        return s.begin.line ? " (line " + std::to_string(s.begin.line) + ")" : std::string{};
    }

    const toml::table* t_;
    std::string where_;
    std::set<std::string> used_;
};

inline FSource parse_f_source(const std::string& s) {
    if (s == "ode") return FSource::ode;
    if (s == "decay_bound") return FSource::decay_bound;
    if (s == "zero") return FSource::zero;
    throw ConfigError("f_source must be one of ode, decay_bound, zero; got '" + s + "'");
}

inline WeightKind parse_weight(const std::string& s) {
    if (s == "uniform") return WeightKind::uniform;
    if (s == "sobolev") return WeightKind::sobolev;
    if (s == "analytic") return WeightKind::analytic;
    throw ConfigError("weight.kind must be one of uniform, sobolev, analytic; got '" + s + "'");
}

}  // namespace detail

inline RunConfig parse_config(const toml::table& root, Command cmd, const std::filesystem::path& source = {}) {
    RunConfig rc;
    rc.command = cmd;
    rc.source = source;
    detail::TableReader top(root, "");

    const bool needs_sim = cmd == Command::simulate || cmd == Command::echo_report;
    const double nu = top.require_number("nu");
    const double c = top.require_number("c");
    const double alpha = top.number("alpha").value_or(0.0);
    rc.params = validate_params({nu, c, alpha});

    auto& s = rc.sim;
    if (needs_sim || cmd == Command::check_coeffs) s.eta = top.require_number("eta");
    else if (auto v = top.number("eta")) s.eta = *v;
    if (needs_sim) {
        s.L = top.require_integer("L");
        s.t_end = top.require_number("t_end");
    } else {
        s.L = top.integer("L").value_or(0);
        s.t_end = top.number("t_end").value_or(0.0);
    }
    s.t_start = top.number("t_start").value_or(0.0);
    s.rtol = top.number("rtol").value_or(1e-8);
    s.atol = top.number("atol").value_or(1e-12);
    if (auto v = top.string("f_source")) s.f_source = detail::parse_f_source(*v);
    s.g_forcing_per_l = top.boolean("g_forcing_per_l").value_or(false);
    s.truncation_check = top.boolean("truncation_check").value_or(true);
    if (auto v = top.numbers("sample_times")) s.sample_times = *v;

    if (auto init = top.table("init")) {
        const auto kind = init->string("kind");
        if (!kind) init->fail("kind", "is required");
        if (*kind == "delta_theta" || *kind == "delta_G") {
            s.init.kind = *kind == "delta_theta" ? InitKind::delta_theta : InitKind::delta_G;
            s.init.mode = init->require_integer("mode");
            if (auto a = init->numbers("amplitude")) {
                if (a->size() != 2) init->fail("amplitude", "expected [re, im]");
                s.init.amplitude = {(*a)[0], (*a)[1]};
            }
        } else if (*kind == "file") {
            s.init.kind = InitKind::file;
            auto file = init->string("file");
            if (!file) init->fail("file", "is required when kind = \"file\"");
            std::filesystem::path p(*file);
            if (p.is_relative() && !source.empty()) p = source.parent_path() / p;
            if (s.L < 1) throw ConfigError("init.kind = \"file\" requires L");
            read_init_csv(p, s.L, s.init);
        } else {
            init->fail("kind", "must be one of delta_theta, delta_G, file");
        }
        init->finish();
    } else if (needs_sim) {
        throw ConfigError("[init] table is required for " + command_name(cmd));
    }

    if (auto w = top.table("weight")) {
        rc.weight.kind = detail::parse_weight(w->string("kind").value_or("uniform"));
        rc.weight.N = w->integer("N").value_or(0);
        if (rc.weight.kind == WeightKind::sobolev && rc.weight.N < 0) w->fail("N", "must be >= 0");
        w->finish();
    }

    if (auto th = top.table("thresholds")) {
        rc.factors.a1 = th->number("a1").value_or(rc.factors.a1);
        rc.factors.a2 = th->number("a2").value_or(rc.factors.a2);
        rc.factors.a3 = th->number("a3").value_or(rc.factors.a3);
        rc.factors.k1_stability_variant = th->boolean("k1_stability_variant").value_or(false);
        th->finish();
    }

    if (auto w = top.table("wave")) {
        auto& b = rc.wave;
        b.k = w->integer("k").value_or(b.k);
        b.f0 = w->number("f0").value_or(b.f0);
        b.g0 = w->number("g0").value_or(b.g0);
        b.t_min = w->number("t_min").value_or(b.t_min);
        b.t_max = w->number("t_max").value_or(b.t_max);
        b.points = w->integer("points").value_or(b.points);
        if (auto g = w->string("grid")) {
            if (*g != "linear" && *g != "log") w->fail("grid", "must be linear or log");
            b.log_grid = *g == "log";
        }
        if (auto a = w->numbers("fit_alphas")) b.fit_alphas = *a;
        b.fit_t_lo = w->number("fit_t_lo").value_or(b.fit_t_lo);
        b.fit_t_hi = w->number("fit_t_hi").value_or(b.fit_t_hi);
        w->finish();
    }

    if (auto e = top.table("echo")) {
        rc.echo.bootstrap_k = e->integer("bootstrap_k");
        rc.echo.bootstrap_points = e->integer("bootstrap_points").value_or(rc.echo.bootstrap_points);
        rc.echo.write_trajectory = e->boolean("write_trajectory").value_or(true);
        e->finish();
    }

    if (auto w = top.table("sweep")) {
        auto& b = rc.sweep;
        if (auto v = w->integers("k0")) b.k0 = *v;
        if (auto v = w->numbers("eta")) b.eta = *v;
        if (auto v = w->string("init_at")) {
            if (*v != "k0" && *v != "k2") w->fail("init_at", "must be k0 or k2");
            b.init_at = *v;
        }
        b.L_min = w->integer("L_min").value_or(b.L_min);
        b.L_pad = w->integer("L_pad").value_or(b.L_pad);
        b.synthetic_slope = w->number("synthetic_slope");
        b.synthetic_intercept = w->number("synthetic_intercept").value_or(0.0);
        w->finish();
        if (b.k0.empty() == b.eta.empty()) throw ConfigError("[sweep] needs exactly one of k0 or eta");
    } else if (cmd == Command::sweep) {
        throw ConfigError("[sweep] table is required for sweep");
    }

    if (auto w = top.table("blowup")) {
        auto& b = rc.blowup;
        b.sigma = w->number("sigma").value_or(b.sigma);
        if (auto v = w->numbers("eta")) b.eta = *v;
        b.margin = w->number("margin").value_or(b.margin);
        b.samples = w->integer("samples").value_or(b.samples);
        b.grid_points = w->integer("grid_points").value_or(b.grid_points);
        b.L_min = w->integer("L_min").value_or(b.L_min);
        b.L_pad = w->integer("L_pad").value_or(b.L_pad);
        b.require_viscous_condition = w->boolean("require_viscous_condition").value_or(true);
        w->finish();
        if (b.eta.empty()) throw ConfigError("blowup.eta must list at least one frequency");
        if (b.samples < 2 || b.grid_points < 2) throw ConfigError("blowup.samples and grid_points must be >= 2");
        if (b.margin < 0.0) throw ConfigError("blowup.margin must be >= 0");
    } else if (cmd == Command::blowup) {
        throw ConfigError("[blowup] table is required for blowup");
    }

    if (auto w = top.table("check_coeffs")) {
        if (auto v = w->integers("k")) rc.check_coeffs.k = *v;
        rc.check_coeffs.window = w->integer("window").value_or(rc.check_coeffs.window);
        w->finish();
    }

    top.finish();
    if (needs_sim) validate_config(s, rc.params);
    return rc;
}

inline RunConfig load_config(const std::filesystem::path& path, Command cmd) {
    toml::table root;
    try {
        root = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        const auto& b = e.source().begin;
        throw ConfigError(path.string() + ":" + std::to_string(b.line) + ":" + std::to_string(b.column) + ": " +
                          std::string(e.description()));
    }
    return parse_config(root, cmd, path);
}

inline RunConfig parse_config_string(std::string_view text, Command cmd) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        throw ConfigError("config: " + std::string(e.description()));
    }
    return parse_config(root, cmd);
}

}  // namespace echochain

#endif
