#ifndef ECHOCHAIN_IO_HPP
#define ECHOCHAIN_IO_HPP

#include <chrono>
#include <cctype>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core_model.hpp"
#include "mode_system.hpp"

namespace echochain {

using Json = nlohmann::ordered_json;

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Writes to a sibling temporary and renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& body) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (ec) throw ConfigError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open " + tmp.string() + " for writing");
        out << body;
        out.flush();
        if (!out) throw ConfigError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw ConfigError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : cols_(header.size()) { row(header); }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw Error("csv row has wrong width");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) body_ << ',';
            body_ << cells[i];
        }
        body_ << '\n';
    }
    std::string str() const { return body_.str(); }

private:
    std::size_t cols_;
    std::ostringstream body_;
};

inline std::string trajectory_csv(const Trajectory& tr) {
    CsvTable t({"t", "l", "theta_re", "theta_im", "G_re", "G_im"});
    for (const auto& s : tr.samples)
        for (int l = 1; l <= s.L(); ++l)
            t.row({fmt17(s.t), std::to_string(l), fmt17(s.th(l).real()), fmt17(s.th(l).imag()), fmt17(s.gu(l).real()),
                   fmt17(s.gu(l).imag())});
    return t.str();
}

// Reads l, theta_re, theta_im, G_re, G_im rows (header optional) into an init spec.
inline void read_init_csv(const std::filesystem::path& path, int L, InitSpec& init) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open init file " + path.string());
    init.theta.assign(static_cast<std::size_t>(L), complex{});
    init.G.assign(static_cast<std::size_t>(L), complex{});
    std::vector<bool> seen(static_cast<std::size_t>(L), false);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
        int l = 0;
        double a = 0, b = 0, c = 0, d = 0;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &l, &a, &b, &c, &d) != 5)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected l,theta_re,theta_im,G_re,G_im");
        if (l < 1 || l > L) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": mode out of range 1..L");
        const auto i = static_cast<std::size_t>(l - 1);
        if (seen[i]) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": duplicate mode");
        seen[i] = true;
        init.theta[i] = {a, b};
        init.G[i] = {c, d};
    }
}

inline Json params_json(const PhysicalParams& p) {
    return Json{{"nu", p.nu}, {"c", p.c}, {"g", p.g}, {"alpha", p.alpha}, {"theorem_range_exceeded", p.theorem_range_exceeded}};
}

inline Json thresholds_json(const RegimeThresholds& th) {
    return Json{{"k0", th.k0}, {"k1", th.k1}, {"k2", th.k2}, {"k3", th.k3}, {"all_stable", th.all_stable},
                {"factors", {{"a1", th.factors.a1}, {"a2", th.factors.a2}, {"a3", th.factors.a3},
                             {"k1_stability_variant", th.factors.k1_stability_variant}}}};
}

inline Json stats_json(const etd::StepStats& s) {
    return Json{{"accepted", s.accepted}, {"rejected", s.rejected}, {"min_step", s.accepted ? s.min_step : 0.0}, {"max_step", s.max_step}};
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_atomic(path, j.dump(2) + "\n"); }

}  // namespace echochain

#endif
