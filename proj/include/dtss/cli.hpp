#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dtss/generators.hpp"
#include "dtss/json_io.hpp"
#include "dtss/spectral.hpp"
#include "dtss/stats.hpp"

namespace dtss::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kResourceError = 3, kVerificationFailed = 4 };

/// Size or resource limits exceeded, or a required input is missing.
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kMaxEnsembleValues = 400'000'000;
inline constexpr std::size_t kMaxGaussianN = 20'000;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct GeneratorSection {
    std::string type;
    std::size_t N = 16;
    std::size_t M = 1000;
    // type1_iid
    Marginal marginal = Marginal::normal();
    // type2_iid
    Ex41Config ex41;
    // type2_shift
    Ex42Config ex42;
    // gaussian
    std::uint64_t p = 2;
    double H = 0.5;
    double var = 1.0;
};

struct CheckSpec {
    std::string name;
    std::size_t n = 1, factor = 2;             // marginal_scaling, covariance (n)
    std::size_t m = 0, k = 1, tau = 1;         // stationary_increments, covariance (m)
    std::optional<double> expected;            // covariance
};

struct VerificationSection {
    double alpha = kDefaultAlpha;
    std::optional<std::string> suite;
    std::vector<CheckSpec> checks;
    std::optional<ScalingFunction> scaling;
};

struct SpectralSection {
    std::optional<std::uint64_t> p;
    std::optional<double> H;
    unsigned M_max = 3;
    std::optional<std::size_t> R;
    double alpha = kDefaultAlpha;
    std::vector<std::string> checks;
    std::uint64_t q = 3;
    Rational offgrid_lambda{1, 3};
    unsigned offgrid_m = 1;
    // unset: layers 2 and 3 where they exist, else layer 1
    std::optional<std::vector<unsigned>> tail_from;

    std::vector<unsigned> tail_layers() const {
        if (tail_from) return *tail_from;
        std::vector<unsigned> out;
        for (unsigned m : {2u, 3u})
            if (m <= M_max) out.push_back(m);
        if (out.empty()) out.push_back(1);
        return out;
    }
    bool write_tables = true;
};

struct OutputSection {
    std::string dir = "out";
    std::vector<std::string> formats{"csv", "json"};

    bool wants(const std::string& f) const { return std::find(formats.begin(), formats.end(), f) != formats.end(); }
};

struct ExperimentConfig {
    std::optional<std::uint64_t> master_seed;
    std::optional<GeneratorSection> generator;
    std::optional<std::string> ensemble_csv;
    VerificationSection verification;
    SpectralSection spectral;
    OutputSection output;
};

namespace detail {

inline const std::vector<std::string> kGeneratorTypes{"type1_iid", "type2_iid", "type2_shift", "type2_gaussian",
                                                      "type3_gaussian"};
inline const std::vector<std::string> kCheckNames{"marginal_scaling", "stationary_increments", "symmetry",
                                                  "covariance"};
inline const std::vector<std::string> kSpectralChecks{"rotation", "scaling_relation", "q_permutation", "offgrid",
                                                      "tail"};

inline bool one_of(const std::string& s, const std::vector<std::string>& options) {
    return std::find(options.begin(), options.end(), s) != options.end();
}

inline GeneratorSection parse_generator(const json& j) {
    Fields f(j, "generator");
    GeneratorSection g;
    g.type = f.get<std::string>("type");
    if (!one_of(g.type, kGeneratorTypes)) throw ConfigError("'generator.type': unknown generator '" + g.type + "'");
    g.N = f.get_or<std::size_t>("N", g.N);
    g.M = f.get_or<std::size_t>("M", g.M);
    if (g.N < 1) throw ConfigError("'generator.N' must be at least 1");
    if (g.M < 1) throw ConfigError("'generator.M' must be at least 1");
    if (g.type == "type1_iid") {
        if (f.has("marginal")) g.marginal = marginal_from_json(f.raw("marginal"), "generator.marginal");
    } else if (g.type == "type2_iid") {
        g.ex41.p = f.get<std::uint64_t>("p");
        g.ex41.H = f.get<double>("H");
        if (f.has("K")) g.ex41.depth = f.get<unsigned>("K");
        if (f.has("y_marginal")) g.ex41.y_marginal = marginal_from_json(f.raw("y_marginal"), "generator.y_marginal");
        g.ex41.N = g.N;
    } else if (g.type == "type2_shift") {
        g.ex42.p = f.get<std::uint64_t>("p");
        if (f.has("b") == f.has("H")) throw ConfigError("'generator': give exactly one of 'b' and 'H'");
        g.ex42.b = f.has("b") ? f.get<double>("b")
                              : std::pow(static_cast<double>(g.ex42.p), -f.get<double>("H"));
        if (f.has("K")) g.ex42.depth = f.get<unsigned>("K");
        if (f.has("u")) {
            Fields u(f.raw("u"), "generator.u");
            if (u.has("values") == u.has("random"))
                throw ConfigError("'generator.u': give exactly one of 'values' and 'random'");
            if (u.has("values")) {
                g.ex42.u.fixed = u.get<std::vector<double>>("values");
            } else {
                g.ex42.u.fixed.clear();
                g.ex42.u.random = marginal_from_json(u.raw("random"), "generator.u.random");
                g.ex42.u.independent_per_layer = u.get_or<bool>("per_layer", false);
            }
            u.finish();
        }
        g.ex42.N = g.N;
    } else if (g.type == "type2_gaussian") {
        g.p = f.get<std::uint64_t>("p");
        g.H = f.get<double>("H");
        g.var = f.get_or<double>("var", 1.0);
    } else {
        g.H = f.get<double>("H");
        g.var = f.get_or<double>("var", 1.0);
    }
    f.finish();
    return g;
}

inline CheckSpec parse_check(const json& j, const std::string& path) {
    Fields f(j, path);
    CheckSpec c;
    c.name = f.get<std::string>("name");
    if (!one_of(c.name, kCheckNames)) throw ConfigError("'" + path + ".name': unknown check '" + c.name + "'");
    if (c.name == "marginal_scaling") {
        c.n = f.get_or<std::size_t>("n", 1);
        c.factor = f.get_or<std::size_t>("factor", 2);
    } else if (c.name == "stationary_increments") {
        c.m = f.get_or<std::size_t>("m", 0);
        c.k = f.get_or<std::size_t>("k", 1);
        c.tau = f.get_or<std::size_t>("tau", 1);
    } else if (c.name == "covariance") {
        c.n = f.get<std::size_t>("n");
        c.m = f.get<std::size_t>("m");
        if (f.has("expected")) c.expected = f.get<double>("expected");
    }
    f.finish();
    return c;
}

inline VerificationSection parse_verification(const json& j) {
    Fields f(j, "verification");
    VerificationSection v;
    v.alpha = f.get_or<double>("alpha", v.alpha);
    if (!(v.alpha > 0.0 && v.alpha < 1.0)) throw ConfigError("'verification.alpha' must lie in (0, 1)");
    if (f.has("suite")) {
        v.suite = f.get<std::string>("suite");
        if (*v.suite != "type2") throw ConfigError("'verification.suite': unknown suite '" + *v.suite + "'");
    }
    if (f.has("checks")) {
        const json& list = f.raw("checks");
        if (!list.is_array()) throw ConfigError("'verification.checks' must be an array");
        for (std::size_t i = 0; i < list.size(); ++i)
            v.checks.push_back(parse_check(list[i], "verification.checks." + std::to_string(i)));
    }
    if (f.has("scaling")) v.scaling = scaling_from_json(f.raw("scaling"), "verification.scaling");
    f.finish();
    return v;
}

inline SpectralSection parse_spectral(const json& j) {
    Fields f(j, "spectral");
    SpectralSection s;
    if (f.has("p")) s.p = f.get<std::uint64_t>("p");
    if (f.has("H")) s.H = f.get<double>("H");
    s.M_max = f.get_or<unsigned>("M_max", s.M_max);
    if (s.M_max < 1) throw ConfigError("'spectral.M_max' must be at least 1");
    if (f.has("R")) {
        s.R = f.get<std::size_t>("R");
        if (*s.R < 1) throw ConfigError("'spectral.R' must be at least 1");
    }
    s.alpha = f.get_or<double>("alpha", s.alpha);
    if (!(s.alpha > 0.0 && s.alpha < 1.0)) throw ConfigError("'spectral.alpha' must lie in (0, 1)");
    if (f.has("checks")) {
        s.checks = f.get<std::vector<std::string>>("checks");
        for (const auto& c : s.checks)
            if (!one_of(c, kSpectralChecks)) throw ConfigError("'spectral.checks': unknown check '" + c + "'");
    }
    s.q = f.get_or<std::uint64_t>("q", s.q);
    if (f.has("offgrid")) {
        Fields o(f.raw("offgrid"), "spectral.offgrid");
        if (o.has("lambda")) s.offgrid_lambda = parse_rational(o.get<std::string>("lambda"));
        s.offgrid_m = o.get_or<unsigned>("m", s.offgrid_m);
        o.finish();
    }
    if (f.has("tail_from")) s.tail_from = f.get<std::vector<unsigned>>("tail_from");
    s.write_tables = f.get_or<bool>("write_tables", s.write_tables);
    f.finish();
    return s;
}

inline OutputSection parse_output(const json& j) {
    Fields f(j, "output");
    OutputSection o;
    o.dir = f.get_or<std::string>("dir", o.dir);
    if (f.has("formats")) {
        o.formats = f.get<std::vector<std::string>>("formats");
        for (const auto& fm : o.formats)
            if (fm != "csv" && fm != "json") throw ConfigError("'output.formats': unknown format '" + fm + "'");
    }
    f.finish();
    return o;
}

}  // namespace detail

/// Strict parse; unknown keys anywhere are fatal.
inline ExperimentConfig parse_config(const json& j) {
    Fields f(j, "");
    ExperimentConfig c;
    if (f.has("master_seed")) c.master_seed = f.get<std::uint64_t>("master_seed");
    if (f.has("generator")) c.generator = detail::parse_generator(f.raw("generator"));
    if (f.has("input")) {
        Fields in(f.raw("input"), "input");
        c.ensemble_csv = in.get<std::string>("ensemble_csv");
        in.finish();
    }
    if (c.generator && c.ensemble_csv) throw ConfigError("config: give either 'generator' or 'input', not both");
    if (f.has("verification")) c.verification = detail::parse_verification(f.raw("verification"));
    if (f.has("spectral")) c.spectral = detail::parse_spectral(f.raw("spectral"));
    if (f.has("output")) c.output = detail::parse_output(f.raw("output"));
    f.finish();
    if (c.generator && !c.master_seed) throw ConfigError("config: 'master_seed' is required for generation");
    return c;
}

inline json to_json(const GeneratorSection& g) {
    json j{{"type", g.type}, {"N", g.N}, {"M", g.M}};
    if (g.type == "type1_iid") {
        j["marginal"] = dtss::to_json(g.marginal);
    } else if (g.type == "type2_iid") {
        j["p"] = g.ex41.p;
        j["H"] = g.ex41.H;
        if (g.ex41.depth) j["K"] = *g.ex41.depth;
        j["y_marginal"] = dtss::to_json(g.ex41.y_marginal);
    } else if (g.type == "type2_shift") {
        j["p"] = g.ex42.p;
        j["b"] = g.ex42.b;
        if (g.ex42.depth) j["K"] = *g.ex42.depth;
        if (g.ex42.u.random)
            j["u"] = {{"random", dtss::to_json(*g.ex42.u.random)}, {"per_layer", g.ex42.u.independent_per_layer}};
        else
            j["u"] = {{"values", g.ex42.u.fixed}};
    } else {
        if (g.type == "type2_gaussian") j["p"] = g.p;
        j["H"] = g.H;
        j["var"] = g.var;
    }
    return j;
}

inline json to_json(const CheckSpec& c) {
    json j{{"name", c.name}};
    if (c.name == "marginal_scaling") {
        j["n"] = c.n;
        j["factor"] = c.factor;
    } else if (c.name == "stationary_increments") {
        j["m"] = c.m;
        j["k"] = c.k;
        j["tau"] = c.tau;
    } else if (c.name == "covariance") {
        j["n"] = c.n;
        j["m"] = c.m;
        if (c.expected) j["expected"] = *c.expected;
    }
    return j;
}

/// Fully resolved config with defaults filled in; parse_config(to_json(c))
/// reproduces c.
inline json to_json(const ExperimentConfig& c) {
    json j = json::object();
    if (c.master_seed) j["master_seed"] = *c.master_seed;
    if (c.generator) j["generator"] = to_json(*c.generator);
    if (c.ensemble_csv) j["input"] = {{"ensemble_csv", *c.ensemble_csv}};
    json checks = json::array();
    for (const auto& ch : c.verification.checks) checks.push_back(to_json(ch));
    json v{{"alpha", c.verification.alpha}};
    if (c.verification.suite) v["suite"] = *c.verification.suite;
    v["checks"] = std::move(checks);
    if (c.verification.scaling) v["scaling"] = dtss::to_json(*c.verification.scaling);
    j["verification"] = std::move(v);
    json s = json::object();
    if (c.spectral.p) s["p"] = *c.spectral.p;
    if (c.spectral.H) s["H"] = *c.spectral.H;
    s["M_max"] = c.spectral.M_max;
    if (c.spectral.R) s["R"] = *c.spectral.R;
    s["alpha"] = c.spectral.alpha;
    s["checks"] = c.spectral.checks;
    s["q"] = c.spectral.q;
    s["offgrid"] = {{"lambda", dtss::to_string(c.spectral.offgrid_lambda)}, {"m", c.spectral.offgrid_m}};
    if (c.spectral.tail_from) s["tail_from"] = *c.spectral.tail_from;
    s["write_tables"] = c.spectral.write_tables;
    j["spectral"] = std::move(s);
    j["output"] = {{"dir", c.output.dir}, {"formats", c.output.formats}};
    return j;
}

/// Sets a dotted key ("a.b.c" or "list.0.x") to a JSON-parsed value, or to
/// the raw string when the value is not valid JSON.
inline void apply_override(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &root;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) throw ConfigError("--set: empty segment in '" + key + "'");
        parts.push_back(part);
    }
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const bool last = i + 1 == parts.size();
        if (node->is_array()) {
            std::size_t idx = 0;
            try {
                idx = std::stoull(parts[i]);
            } catch (const std::logic_error&) {
                throw ConfigError("--set: '" + parts[i] + "' is not an array index in '" + key + "'");
            }
            if (idx >= node->size()) throw ConfigError("--set: index out of range in '" + key + "'");
            node = &(*node)[idx];
        } else {
            if (node->is_null()) *node = json::object();
            if (!node->is_object()) throw ConfigError("--set: '" + key + "' descends into a non-object");
            node = &(*node)[parts[i]];
        }
        if (last) *node = value;
    }
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

namespace detail {

inline void guard_size(std::size_t M, std::size_t N) {
    if (static_cast<double>(M) * static_cast<double>(N + 1) > static_cast<double>(kMaxEnsembleValues))
        throw ResourceError("ensemble of " + std::to_string(M) + " paths of length " + std::to_string(N + 1) +
                            " exceeds the " + std::to_string(kMaxEnsembleValues) + " value budget");
}

inline PathEnsemble make_ensemble(const ExperimentConfig& c) {
    if (c.ensemble_csv) {
        std::ifstream in(*c.ensemble_csv);
        if (!in) throw ResourceError("cannot open ensemble CSV '" + *c.ensemble_csv + "'");
        return read_ensemble_csv(in);
    }
    if (!c.generator) throw ConfigError("config: need a 'generator' or an 'input' section");
    const auto& g = *c.generator;
    const auto seed = *c.master_seed;
    guard_size(g.M, g.N);
    if (g.type == "type1_iid") return gen_type1_iid(g.marginal, g.N, g.M, seed);
    if (g.type == "type2_iid") return gen_type2_iid(g.ex41, g.M, seed);
    if (g.type == "type2_shift") return gen_type2_shift(g.ex42, g.M, seed);
    if (g.N > kMaxGaussianN)
        throw ResourceError("Gaussian generator limited to N <= " + std::to_string(kMaxGaussianN));
    if (g.type == "type2_gaussian") return gen_type2_gaussian(g.p, g.H, g.var, g.N, g.M, seed);
    return gen_type3_gaussian(g.H, g.var, g.N, g.M, seed);
}

/// Scaling function implied by the generator, unless overridden.
inline std::optional<ScalingFunction> implied_scaling(const ExperimentConfig& c) {
    if (c.verification.scaling) return c.verification.scaling;
    if (!c.generator) return std::nullopt;
    const auto& g = *c.generator;
    if (g.type == "type1_iid") return ScalingFunction::type1();
    if (g.type == "type2_iid") return ScalingFunction::type2(g.ex41.p, g.ex41.H);
    if (g.type == "type2_shift") return ScalingFunction::type2(g.ex42.p, g.ex42.H());
    if (g.type == "type2_gaussian") return ScalingFunction::type2(g.p, g.H);
    return ScalingFunction::type3(g.H);
}

inline std::optional<double> implied_covariance(const ExperimentConfig& c, std::size_t n, std::size_t m) {
    if (!c.generator) return std::nullopt;
    const auto& g = *c.generator;
    const std::size_t top = std::max(n, m);
    if (g.type == "type2_gaussian") return type2_covariance(g.p, g.H, g.var, top)(n, m);
    if (g.type == "type3_gaussian") return type3_covariance(g.H, g.var, top)(n, m);
    return std::nullopt;
}

inline std::vector<CheckSpec> expand_checks(const VerificationSection& v) {
    std::vector<CheckSpec> out;
    if (v.suite && *v.suite == "type2") {
        for (std::size_t factor : {2, 3})
            for (std::size_t n : {1, 2, 3}) {
                CheckSpec c;
                c.name = "marginal_scaling";
                c.n = n;
                c.factor = factor;
                out.push_back(c);
            }
        for (std::size_t m : {0, 1, 2})
            for (std::size_t k : {0, 1, 2}) {
                CheckSpec c;
                c.name = "stationary_increments";
                c.m = m;
                c.k = k;
                c.tau = 1;
                out.push_back(c);
            }
    }
    out.insert(out.end(), v.checks.begin(), v.checks.end());
    return out;
}

class OutputDir {
public:
    explicit OutputDir(const std::string& dir) : dir_(dir) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw ResourceError("cannot create output directory '" + dir + "': " + ec.message());
    }

    std::ofstream open(const std::string& name) {
        std::ofstream os(dir_ / name, std::ios::binary);
        if (!os) throw ResourceError("cannot write '" + (dir_ / name).string() + "'");
        written_.push_back(name);
        return os;
    }

    void write_json(const std::string& name, const json& j) {
        auto os = open(name);
        os << j.dump(2) << '\n';
    }

    const std::vector<std::string>& written() const { return written_; }
    const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> written_;
};

inline void write_manifest(OutputDir& out, const std::string& command, const ExperimentConfig& c) {
    json outputs = out.written();
    const json manifest{{"command", command}, {"config", to_json(c)}, {"outputs", outputs}};
    out.write_json(command + ".manifest.json", manifest);
}

inline json check_params(const CheckSpec& c) {
    json j = to_json(c);
    j.erase("name");
    return j;
}

}  // namespace detail

struct RunResult {
    int exit_code = kOk;
    bool passed = true;
};

inline RunResult cmd_generate(const ExperimentConfig& c) {
    const PathEnsemble ens = detail::make_ensemble(c);
    detail::OutputDir out(c.output.dir);
    if (c.output.wants("csv")) {
        auto os = out.open("ensemble.csv");
        write_ensemble_csv(os, ens);
    }
    if (c.output.wants("json")) {
        json meta = ens.meta ? dtss::to_json(*ens.meta) : json::object();
        meta["M"] = ens.size();
        out.write_json("meta.json", meta);
    }
    detail::write_manifest(out, "generate", c);
    return {};
}

inline json run_verification(const ExperimentConfig& c, const PathEnsemble& ens, bool& passed) {
    const double alpha = c.verification.alpha;
    const auto checks = detail::expand_checks(c.verification);
    std::vector<NamedReport> named;
    json extras = json::array();
    for (const auto& ch : checks) {
        NamedReport r;
        r.name = ch.name;
        json extra = json::object();
        if (ch.name == "marginal_scaling") {
            const auto sf = detail::implied_scaling(c);
            if (!sf) throw ConfigError("marginal_scaling needs 'verification.scaling' for CSV input");
            r.report = test_marginal_scaling(ens, *sf, ch.n, ch.factor, alpha);
        } else if (ch.name == "stationary_increments") {
            r.report = test_stationary_increments(ens, ch.m, ch.k, ch.tau, alpha);
        } else if (ch.name == "symmetry") {
            if (ens.size() < kMinEnsembleForTests)
                throw ResourceError("symmetry check needs at least 100 paths, have " + std::to_string(ens.size()));
            r.report = symmetry_check(ens, alpha);
        } else {
            const auto expected = ch.expected ? ch.expected : detail::implied_covariance(c, ch.n, ch.m);
            if (!expected) throw ConfigError("covariance check needs 'expected' for this generator");
            const Estimate e = empirical_covariance(ens, ch.n, ch.m);
            const double z = e.stderr_ > 0.0 ? (e.value - *expected) / e.stderr_ : (e.value == *expected ? 0.0 : INFINITY);
            r.report.statistic = std::abs(z);
            r.report.p_value = std::isfinite(z) ? std::erfc(std::abs(z) / std::numbers::sqrt2) : 0.0;
            r.report.alpha = alpha;
            r.report.reject = r.report.p_value < alpha;
            r.report.n = r.report.m = ens.size();
            extra = {{"estimate", e.value}, {"stderr", e.stderr_}, {"expected", *expected}};
        }
        named.push_back(std::move(r));
        extras.push_back(std::move(extra));
    }
    const SuiteResult suite = holm_suite(std::move(named), alpha);
    json list = json::array();
    for (std::size_t i = 0; i < suite.checks.size(); ++i) {
        json j{{"name", suite.checks[i].name}, {"params", detail::check_params(checks[i])}};
        const json report = dtss::to_json(suite.checks[i].report);
        for (const auto& [k, v] : report.items()) j[k] = v;
        for (auto& [k, v] : extras[i].items()) j[k] = v;
        j["holm_reject"] = suite.checks[i].holm_reject;
        list.push_back(std::move(j));
    }
    passed = suite.pass;
    return json{{"alpha", alpha}, {"correction", "holm"}, {"pass", suite.pass}, {"checks", std::move(list)}};
}

inline RunResult cmd_verify(const ExperimentConfig& c) {
    const PathEnsemble ens = detail::make_ensemble(c);
    bool passed = true;
    const json report = run_verification(c, ens, passed);
    detail::OutputDir out(c.output.dir);
    out.write_json("verify_report.json", report);
    detail::write_manifest(out, "verify", c);
    return {kOk, passed};
}

namespace detail {

/// R = 1 when a truncated periodic generator makes whole periods exact.
inline std::size_t resolve_periods(const ExperimentConfig& c) {
    if (c.spectral.R) return *c.spectral.R;
    if (c.generator) {
        const auto& g = *c.generator;
        std::optional<unsigned> K;
        if (g.type == "type2_iid") K = g.ex41.depth;
        if (g.type == "type2_shift") K = g.ex42.depth;
        if (K && c.spectral.M_max >= *K + 1) return 1;
    }
    return kDefaultPeriods;
}

inline std::pair<std::uint64_t, double> resolve_spectral_p_h(const ExperimentConfig& c) {
    const auto sf = implied_scaling(c);
    std::optional<std::uint64_t> p = c.spectral.p;
    std::optional<double> H = c.spectral.H;
    if (sf && sf->kind == ScalingKind::TypeII) {
        if (!p) p = sf->p;
        if (!H) H = sf->H;
    }
    if (!p || !H) throw ConfigError("spectral: 'spectral.p' and 'spectral.H' are required for this input");
    if (!is_prime(*p)) throw ConfigError("'spectral.p' must be prime");
    if (!(*H > 0.0)) throw ConfigError("'spectral.H' must be positive");
    return {*p, *H};
}

}  // namespace detail

inline RunResult cmd_spectral(const ExperimentConfig& c) {
    const auto [p, H] = detail::resolve_spectral_p_h(c);
    const std::size_t R = detail::resolve_periods(c);
    const auto& sc = c.spectral;
    std::uint64_t P = 0;
    try {
        P = checked_pow(p, sc.M_max, std::uint64_t{1} << 40);
    } catch (const std::overflow_error&) {
        throw ResourceError("spectral: p^M_max exceeds the index budget");
    }
    const std::size_t need = static_cast<std::size_t>(P) * R;
    // size check before generation, so an oversized request fails fast
    if (c.generator && c.generator->N < need)
        throw InsufficientLength(need, c.generator->N + 1);
    const PathEnsemble ens = detail::make_ensemble(c);
    if (ens.N() < need) throw InsufficientLength(need, ens.N() + 1);

    const auto tables = coefficient_tables(ens, p, H, sc.M_max, R);
    const bool wants_tests = std::any_of(sc.checks.begin(), sc.checks.end(), [](const std::string& s) {
        return s == "rotation" || s == "scaling_relation" || s == "q_permutation";
    });
    if (wants_tests && tables.size() < kMinEnsembleForTests)
        throw ResourceError("spectral condition checks need at least 100 paths, have " + std::to_string(tables.size()));

    detail::OutputDir out(c.output.dir);
    json layers = json::array();
    std::vector<Estimate> energies;
    for (unsigned m = 1; m <= sc.M_max; ++m) energies.push_back(layer_energy(tables, m));
    const double expected_ratio = std::pow(static_cast<double>(p), -2.0 * H);
    for (unsigned m = 1; m <= sc.M_max; ++m) {
        json l{{"m", m}, {"layer", checked_pow(p, m)}, {"energy", energies[m - 1].value},
               {"stderr", energies[m - 1].stderr_}};
        if (m < sc.M_max && energies[m - 1].value > 0.0) l["ratio_next"] = energies[m].value / energies[m - 1].value;
        layers.push_back(std::move(l));
    }
    if (c.output.wants("csv")) {
        auto e = out.open("energy.csv");
        e << "layer,m,energy,stderr\n";
        for (unsigned m = 1; m <= sc.M_max; ++m)
            e << checked_pow(p, m) << ',' << m << ',' << format_double(energies[m - 1].value) << ','
              << format_double(energies[m - 1].stderr_) << '\n';
        auto r = out.open("energy_ratio.csv");
        r << "m,ratio,expected\n";
        for (unsigned m = 1; m < sc.M_max; ++m) {
            const double ratio = energies[m - 1].value > 0.0 ? energies[m].value / energies[m - 1].value : NAN;
            r << m << ',' << format_double(ratio) << ',' << format_double(expected_ratio) << '\n';
        }
    }
    if (c.output.wants("json") && sc.write_tables) {
        json arr = json::array();
        for (const auto& t : tables) arr.push_back(dtss::to_json(t));
        out.write_json("tables.json", arr);
    }

    bool passed = true;
    json conditions = json::array();
    for (const auto& name : sc.checks) {
        if (name == "rotation" || name == "scaling_relation" || name == "q_permutation") {
            ConditionReport rep;
            if (name == "rotation") rep = check_rotation(tables, sc.alpha);
            if (name == "scaling_relation") {
                if (sc.M_max < 2) throw ConfigError("scaling_relation needs 'spectral.M_max' >= 2");
                rep = check_scaling_relation(tables, sc.alpha);
            }
            if (name == "q_permutation") {
                if (sc.q == p || !is_prime(sc.q)) throw ConfigError("'spectral.q' must be a prime different from p");
                rep = check_q_permutation(tables, sc.q, sc.alpha);
            }
            passed = passed && rep.pass;
            conditions.push_back(dtss::to_json(rep));
        } else if (name == "offgrid") {
            if (is_p_adic(sc.offgrid_lambda, p) || sc.offgrid_lambda.num >= sc.offgrid_lambda.den)
                throw ConfigError("'spectral.offgrid.lambda' must be a non-p-adic rational in [0, 1)");
            const auto og = offgrid_energy(ens, sc.offgrid_lambda, p, H, sc.offgrid_m, R);
            passed = passed && og.holds;
            conditions.push_back({{"condition", "offgrid"},
                                  {"lambda", dtss::to_string(og.lambda)},
                                  {"m", og.m},
                                  {"N", og.N},
                                  {"estimate", og.energy.value},
                                  {"stderr", og.energy.stderr_},
                                  {"second_moment", og.second_moment},
                                  {"bound", og.bound},
                                  {"slack", og.slack},
                                  {"pass", og.holds}});
        } else {  // tail
            json rows = json::array();
            bool ok = true;
            for (unsigned from : sc.tail_layers()) {
                if (from < 1 || from > sc.M_max) throw ConfigError("'spectral.tail_from' entries must lie in 1..M_max");
                const Estimate est = tail_energy(tables, from, 1);
                const double bound = tail_energy_bound(p, H, from, sc.M_max, energies[0].value);
                const bool holds = est.value <= bound + 4.0 * est.stderr_;
                ok = ok && holds;
                rows.push_back({{"from", from}, {"estimate", est.value}, {"stderr", est.stderr_}, {"bound", bound},
                                {"pass", holds}});
            }
            passed = passed && ok;
            conditions.push_back({{"condition", "tail"}, {"n", 1}, {"rows", std::move(rows)}, {"pass", ok}});
        }
    }
    const json report{{"p", p},         {"H", H},           {"M_max", sc.M_max},
                      {"R", R},         {"N_used", need},   {"paths", tables.size()},
                      {"expected_ratio", expected_ratio},   {"layers", std::move(layers)},
                      {"conditions", std::move(conditions)}, {"pass", passed}};
    out.write_json("spectral_report.json", report);
    detail::write_manifest(out, "spectral", c);
    return {kOk, passed};
}

/// Collates verify_report.json and spectral_report.json from the output
/// directory into summary.json.
inline RunResult cmd_report(const ExperimentConfig& c, std::ostream& os) {
    const std::filesystem::path dir(c.output.dir);
    json summary = json::object();
    bool any = false, passed = true;
    for (const char* name : {"verify", "spectral"}) {
        std::ifstream in(dir / (std::string(name) + "_report.json"));
        if (!in) continue;
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ResourceError(std::string("unreadable ") + name + " report: " + e.what());
        }
        any = true;
        const bool ok = j.value("pass", false);
        passed = passed && ok;
        json entry{{"pass", ok}};
        if (j.contains("checks")) {
            std::size_t rej = 0;
            for (const auto& ch : j["checks"]) rej += ch.value("holm_reject", false);
            entry["checks"] = j["checks"].size();
            entry["rejections"] = rej;
        }
        if (j.contains("conditions")) {
            json conds = json::object();
            for (const auto& cond : j["conditions"]) conds[cond.value("condition", "?")] = cond.value("pass", false);
            entry["conditions"] = std::move(conds);
        }
        os << name << ": " << (ok ? "pass" : "FAIL") << '\n';
        summary[name] = std::move(entry);
    }
    if (!any) throw ResourceError("no reports found in '" + c.output.dir + "'");
    summary["pass"] = passed;
    detail::OutputDir out(c.output.dir);
    out.write_json("summary.json", summary);
    detail::write_manifest(out, "report", c);
    return {kOk, passed};
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

struct Invocation {
    std::string command;
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::vector<std::string> overrides;
    bool strict = false;
};

/// Config file contents, unwrapping a manifest, with overrides applied.
inline ExperimentConfig load_config(const Invocation& inv) {
    json j = json::object();
    if (inv.config_path) {
        std::ifstream in(*inv.config_path);
        if (!in) throw ConfigError("cannot open config '" + *inv.config_path + "'");
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        if (j.is_object() && j.contains("command") && j.contains("config") && j.contains("outputs"))
            j = json(j["config"]);
    } else if (inv.command != "report") {
        throw ConfigError("--config is required for '" + inv.command + "'");
    }
    for (const auto& o : inv.overrides) apply_override(j, o);
    if (inv.seed) j["master_seed"] = *inv.seed;
    if (inv.out_dir) {
        if (!j.contains("output") || !j["output"].is_object()) j["output"] = json::object();
        j["output"]["dir"] = *inv.out_dir;
    }
    return parse_config(j);
}

inline int execute(const Invocation& inv, std::ostream& out, std::ostream& err) {
    try {
        const ExperimentConfig c = load_config(inv);
        RunResult r;
        if (inv.command == "generate") r = cmd_generate(c);
        else if (inv.command == "verify") r = cmd_verify(c);
        else if (inv.command == "spectral") r = cmd_spectral(c);
        else r = cmd_report(c, out);
        if (inv.command != "generate") out << inv.command << ": " << (r.passed ? "pass" : "fail") << '\n';
        if (inv.strict && !r.passed) return kVerificationFailed;
        return r.exit_code;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ResourceError& e) {
        err << "resource error: " << e.what() << '\n';
        return kResourceError;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::domain_error& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::logic_error& e) {  // length_error, out_of_range, InsufficientLength
        err << "size error: " << e.what() << '\n';
        return kResourceError;
    } catch (const std::exception& e) {  // overflow, factorization failure, I/O
        err << "resource error: " << e.what() << '\n';
        return kResourceError;
    }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Discrete-time self-similar processes: generation, verification and spectral analysis"};
    app.require_subcommand(1);
    Invocation inv;
    for (const char* name : {"generate", "verify", "spectral", "report"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", inv.config_path, "experiment config (JSON) or a manifest");
        sub->add_option("--seed", inv.seed, "master seed override");
        sub->add_option("--out", inv.out_dir, "output directory override");
        sub->add_option("--set", inv.overrides, "override a dotted config key: key=value")->allow_extra_args(false);
        sub->add_flag("--strict", inv.strict, "exit 4 when a verification fails");
        sub->callback([&inv, name] { inv.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kConfigError;
    }
    return execute(inv, out, err);
}

}  // namespace dtss::cli
