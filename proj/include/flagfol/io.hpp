#pragma once

#include "flagfol/audit.hpp"
#include "flagfol/nash.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace flagfol {

inline constexpr int kSchemaVersion = 1;
inline constexpr int kSnapshotVersion = 1;

using Json = nlohmann::json;

// Everything one CLI run needs. Defaults describe the product metric at default resolution.
struct ExperimentConfig {
    PerturbationSpec spec;
    std::vector<double> taus{0.0};
    double eps_pole = kDefaultEpsPole;
    int psi_samples = 32;
    int t_steps = 512;
    int lattice = 17;
    int curvature_samples = 16;
    int gauss_bonnet_samples = kGaussBonnetSamples;
    double h_tol = 1e-4;
    double w_balance = kWBalance;
    int budget = 50;
    int sweep_steps = 10;
    double silencing_lambda = 4.0;
    double tune_half_width = 1.5;
    LeafTorus leaf;
    std::uint64_t seed = 1;
    std::string output = "out";
    int jobs = 1;

    MetricField metric(double tau) const { return metric_family(tau, spec).with_eps_pole(eps_pole); }

    FunctionalOptions functional() const {
        FunctionalOptions f;
        f.psi_samples = psi_samples;
        f.t_steps = t_steps;
        f.jobs = jobs;
        return f;
    }

    ModuliOptions moduli() const {
        ModuliOptions m;
        m.functional = functional();
        return m;
    }

    Lattice grid() const { return Lattice{lattice, eps_pole}; }

    DescentOptions descent() const {
        DescentOptions d;
        d.moduli = moduli();
        d.h_tol = h_tol;
        d.w_balance = w_balance;
        d.sweep_steps = sweep_steps;
        d.silencing_lambda = silencing_lambda;
        d.tune_half_width = tune_half_width;
        return d;
    }
};

namespace detail {

inline bool power_of_two(long v) { return v > 0 && (v & (v - 1)) == 0; }

inline std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
    int line = 1, col = 1;
    for (std::size_t k = 0; k < std::min(byte, text.size()); ++k) {
        if (text[k] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

// Reads typed members of one JSON object and rejects unknown keys.
class Fields {
  public:
    Fields(const Json& obj, std::string path, std::string source) : obj_(obj), path_(std::move(path)), source_(std::move(source)) {
        if (!obj_.is_object()) fail(path_.empty() ? "top level" : path_, "must be an object");
    }

    // Rejects keys that were never asked for.
    void done() const {
        for (const auto& [key, value] : obj_.items())
            if (!seen_.count(key)) fail(join(key), "unknown key");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return obj_.contains(key);
    }

    const Json& at(const std::string& key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    template <class T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        const Json& v = obj_.at(key);
        if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail(join(key), "must be a string");
            out = v.get<std::string>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) fail(join(key), "must be an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.get<long long>() < 0) fail(join(key), "must be non-negative");
            }
            out = v.get<T>();
        } else {
            if (!v.is_number()) fail(join(key), "must be a number");
            out = v.get<T>();
        }
    }

    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    [[noreturn]] void fail(const std::string& field, const std::string& what) const {
        throw ConfigError(source_ + ": field '" + field + "': " + what);
    }

  private:
    const Json& obj_;
    std::string path_;
    std::string source_;
    std::set<std::string> seen_;
};

inline Vec4 read_vec4(const Json& v, const Fields& f, const std::string& field) {
    if (!v.is_array() || v.size() != 4) f.fail(field, "must be an array of 4 numbers");
    Vec4 out;
    for (int k = 0; k < 4; ++k) {
        if (!v[k].is_number()) f.fail(field, "must be an array of 4 numbers");
        out[k] = v[k].get<double>();
    }
    return out;
}

inline int read_coordinate(const Json& v, const Fields& f, const std::string& field) {
    if (!v.is_string() || coordinate_index(v.get<std::string>()) < 0)
        f.fail(field, "must be one of alpha, beta, phi, psi");
    return coordinate_index(v.get<std::string>());
}

}  // namespace detail

// JSON configuration. Layout (every key optional):
//   metric:     { taus: [..], eps_pole, bumps: [{ i, j, amplitude, center: [4], widths: [4] }] }
//   resolution: { psi_samples, t_steps, lattice, curvature_samples, gauss_bonnet_samples }
//   tolerances: { h_tol, w_balance }
//   descent:    { budget, sweep_steps, silencing_lambda, tune_half_width }
//   leaf:       { alpha, beta }
//   seed, output, jobs
// psi_samples and t_steps are powers of two (t_steps >= 8), lattice is 2^k + 1 >= 3.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "config") {
    Json root;
    try {
        root = Json::parse(text);
    } catch (const Json::parse_error& e) {
        const auto [line, col] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed JSON");
    }
    ExperimentConfig c;
    detail::Fields top(root, "", source);
    if (top.has("metric")) {
        detail::Fields m(top.at("metric"), "metric", source);
        if (m.has("taus")) {
            const Json& t = m.at("taus");
            if (!t.is_array() || t.empty()) m.fail("metric.taus", "must be a non-empty array");
            c.taus.clear();
            for (const Json& v : t) {
                if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 1.0)
                    m.fail("metric.taus", "entries must be numbers in [0, 1]");
                c.taus.push_back(v.get<double>());
            }
        }
        m.read("eps_pole", c.eps_pole);
        if (!(c.eps_pole >= 0.0 && c.eps_pole < 0.5)) m.fail("metric.eps_pole", "must lie in [0, 0.5)");
        if (m.has("bumps")) {
            const Json& bs = m.at("bumps");
            if (!bs.is_array()) m.fail("metric.bumps", "must be an array");
            for (std::size_t k = 0; k < bs.size(); ++k) {
                const std::string path = "metric.bumps[" + std::to_string(k) + "]";
                detail::Fields b(bs[k], path, source);
                BumpTerm term;
                if (!b.has("i") || !b.has("j")) b.fail(path, "needs i and j");
                term.i = detail::read_coordinate(b.at("i"), b, path + ".i");
                term.j = detail::read_coordinate(b.at("j"), b, path + ".j");
                b.read("amplitude", term.amplitude);
                if (b.has("center")) term.center = detail::read_vec4(b.at("center"), b, path + ".center");
                if (b.has("widths")) term.widths = detail::read_vec4(b.at("widths"), b, path + ".widths");
                b.done();
                c.spec.terms.push_back(term);
            }
        }
        m.done();
    }
    if (top.has("resolution")) {
        detail::Fields r(top.at("resolution"), "resolution", source);
        r.read("psi_samples", c.psi_samples);
        r.read("t_steps", c.t_steps);
        r.read("lattice", c.lattice);
        r.read("curvature_samples", c.curvature_samples);
        r.read("gauss_bonnet_samples", c.gauss_bonnet_samples);
        if (!detail::power_of_two(c.psi_samples)) r.fail("resolution.psi_samples", "must be a positive power of two");
        if (!detail::power_of_two(c.t_steps) || c.t_steps < 8) r.fail("resolution.t_steps", "must be a power of two >= 8");
        if (c.lattice < 3 || !detail::power_of_two(c.lattice - 1)) r.fail("resolution.lattice", "must be 2^k + 1 >= 3");
        if (c.curvature_samples < 2) r.fail("resolution.curvature_samples", "must be at least 2");
        if (c.gauss_bonnet_samples < 8) r.fail("resolution.gauss_bonnet_samples", "must be at least 8");
        r.done();
    }
    if (top.has("tolerances")) {
        detail::Fields t(top.at("tolerances"), "tolerances", source);
        t.read("h_tol", c.h_tol);
        t.read("w_balance", c.w_balance);
        if (!(c.h_tol >= 0.0)) t.fail("tolerances.h_tol", "must be non-negative");
        if (!(c.w_balance > 0.0)) t.fail("tolerances.w_balance", "must be positive");
        t.done();
    }
    if (top.has("descent")) {
        detail::Fields d(top.at("descent"), "descent", source);
        d.read("budget", c.budget);
        d.read("sweep_steps", c.sweep_steps);
        d.read("silencing_lambda", c.silencing_lambda);
        d.read("tune_half_width", c.tune_half_width);
        if (c.budget < 0) d.fail("descent.budget", "must be non-negative");
        if (c.sweep_steps < 1) d.fail("descent.sweep_steps", "must be positive");
        if (!(c.silencing_lambda > 0.5)) d.fail("descent.silencing_lambda", "must exceed 0.5");
        if (!(c.tune_half_width > 0.0 && c.tune_half_width <= kPi)) d.fail("descent.tune_half_width", "must lie in (0, pi]");
        d.done();
    }
    if (top.has("leaf")) {
        detail::Fields l(top.at("leaf"), "leaf", source);
        l.read("alpha", c.leaf.alpha);
        l.read("beta", c.leaf.beta);
        l.done();
    }
    top.read("seed", c.seed);
    top.read("output", c.output);
    top.read("jobs", c.jobs);
    if (c.jobs < 1) top.fail("jobs", "must be positive");
    top.done();
    for (double tau : c.taus) {
        try {
            (void)c.metric(tau);
        } catch (const PositivityLost& e) {
            throw ConfigError(source + ": field 'metric.bumps': " + e.what());
        }
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

// Locale-independent number rendering with 12 significant digits.
inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

// CSV with a versioned header comment line.
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::string& kind, const std::vector<std::string>& columns)
        : out_(path) {
        if (!out_) throw ConfigError("cannot write " + path);
        out_ << "# flagfol " << kind << " schema_version=" << kSchemaVersion << "\n";
        for (std::size_t k = 0; k < columns.size(); ++k) out_ << (k ? "," : "") << columns[k];
        out_ << "\n";
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k) out_ << (k ? "," : "") << cells[k];
        out_ << "\n";
    }

  private:
    std::ofstream out_;
};

inline void write_json(const std::string& path, Json j) {
    j["schema_version"] = kSchemaVersion;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline Json to_json(const TraceRecord& r) {
    return Json{{"step", r.step},
                {"tau", r.tau},
                {"stage", r.stage},
                {"field", r.field},
                {"first_variation", r.first_variation},
                {"delta", r.delta},
                {"h_before", r.h_before},
                {"h_after", r.h_after},
                {"accepted", r.accepted},
                {"w_leaf", r.w_leaf ? Json{(*r.w_leaf)[0], (*r.w_leaf)[1]} : Json()},
                {"zero", {r.zero_alpha, r.zero_beta}},
                {"energy", r.energy},
                {"harmonics", r.harmonics},
                {"equidistant_gap", r.equidistant_gap},
                {"note", r.note},
                {"zero_lost", r.zero_lost}};
}

inline void write_trace(const std::string& path, const DescentTrace& t) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    for (const TraceRecord& r : t.records) out << to_json(r).dump() << "\n";
}

// Descent snapshot, one item per line in this order:
//   flagfol-snapshot <version>
//   tau <tau>
//   leaf <alpha> <beta>
//   zero <alpha> <beta> <J00> <J01> <J10> <J11>
//   h <h>
//   steps <count>
//   step <delta> <flow_steps> <label>     (count lines, in application order)
// Numbers carry 17 significant digits so a restore reproduces the metric exactly.
struct Snapshot {
    double tau = 0.0;
    LeafTorus leaf;
    TrackedZero zero;
    double h = 0.0;
    std::vector<AppliedStep> steps;
};

inline std::string write_snapshot(const Snapshot& s) {
    std::ostringstream o;
    auto x = [](double v) { return show(v, 17); };
    o << "flagfol-snapshot " << kSnapshotVersion << "\n";
    o << "tau " << x(s.tau) << "\n";
    o << "leaf " << x(s.leaf.alpha) << " " << x(s.leaf.beta) << "\n";
    o << "zero " << x(s.zero.alpha) << " " << x(s.zero.beta) << " " << x(s.zero.jacobian(0, 0)) << " "
      << x(s.zero.jacobian(0, 1)) << " " << x(s.zero.jacobian(1, 0)) << " " << x(s.zero.jacobian(1, 1)) << "\n";
    o << "h " << x(s.h) << "\n";
    o << "steps " << s.steps.size() << "\n";
    for (const AppliedStep& a : s.steps) o << "step " << x(a.delta) << " " << a.flow_steps << " " << a.label << "\n";
    return o.str();
}

inline Snapshot read_snapshot(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto next = [&](const std::string& key) {
        if (!std::getline(in, line)) throw ConfigError("snapshot ends before '" + key + "'");
        ++line_no;
        std::istringstream ls(line);
        std::string k;
        ls >> k;
        if (k != key) throw ConfigError("snapshot line " + std::to_string(line_no) + ": expected '" + key + "'");
        return ls.str().substr(std::min(ls.str().size(), k.size() + 1));
    };
    Snapshot s;
    int version = 0;
    std::istringstream(next("flagfol-snapshot")) >> version;
    if (version != kSnapshotVersion) throw ConfigError("unsupported snapshot version " + std::to_string(version));
    auto parse = [&](const std::string& rest, auto&... vals) {
        std::istringstream ls(rest);
        ((ls >> vals), ...);
        if (ls.fail()) throw ConfigError("snapshot line " + std::to_string(line_no) + ": malformed numbers");
    };
    parse(next("tau"), s.tau);
    parse(next("leaf"), s.leaf.alpha, s.leaf.beta);
    parse(next("zero"), s.zero.alpha, s.zero.beta, s.zero.jacobian(0, 0), s.zero.jacobian(0, 1),
          s.zero.jacobian(1, 0), s.zero.jacobian(1, 1));
    parse(next("h"), s.h);
    std::size_t count = 0;
    parse(next("steps"), count);
    for (std::size_t k = 0; k < count; ++k) {
        const std::string rest = next("step");
        std::istringstream ls(rest);
        AppliedStep a;
        ls >> a.delta >> a.flow_steps;
        if (ls.fail()) throw ConfigError("snapshot line " + std::to_string(line_no) + ": malformed step");
        std::getline(ls >> std::ws, a.label);
        a.field = field_from_label(s.leaf, a.label);
        s.steps.push_back(std::move(a));
    }
    return s;
}

// The deformed configuration a snapshot describes over the given base metric.
inline Configuration restore(const Snapshot& s, const MetricField& base) {
    Configuration c = Configuration::from(base.with_fd_step(std::min(base.fd_step(), kPullbackFdStep)));
    c.steps = s.steps;
    return c.rebased(c.base);
}

}  // namespace flagfol
