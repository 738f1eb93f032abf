#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtss/distribution.hpp"
#include "dtss/generators.hpp"
#include "dtss/mixability.hpp"
#include "dtss/padic.hpp"
#include "dtss/spectral.hpp"
#include "dtss/stats.hpp"

namespace dtss {

using json = nlohmann::ordered_json;

/// Malformed or schema-violating configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Strict object reader: every key must be consumed, anything left over is
/// reported by its dotted path.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }
    Fields(const Fields&) = delete;
    Fields& operator=(const Fields&) = delete;

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        if (!j_.contains(key)) throw ConfigError("missing field '" + child(key) + "'");
        used_.insert(key);
        return j_.at(key);
    }

    template <typename T>
    T get(const std::string& key) {
        const json& v = raw(key);
        try {
            return convert<T>(v);
        } catch (const json::exception&) {
            throw ConfigError("field '" + child(key) + "' has the wrong type");
        }
    }

    template <typename T>
    T get_or(const std::string& key, T fallback) {
        return has(key) ? get<T>(key) : fallback;
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

    /// Throws on the first unknown key.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ConfigError("unknown field '" + child(it.key()) + "'");
    }

private:
    template <typename T>
    static T convert(const json& v) {
        if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw json::type_error::create(302, "number expected", &v);
            return v.get<double>();
        } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
            if (!v.is_number_integer()) throw json::type_error::create(302, "integer expected", &v);
            if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
            const auto s = v.get<std::int64_t>();
            if (s < 0 && std::is_unsigned_v<T>) throw json::type_error::create(302, "nonnegative expected", &v);
            return static_cast<T>(s);
        } else {
            return v.get<T>();
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Numbers
// ---------------------------------------------------------------------------

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("bad number '" + s + "'");
    return v;
}

/// "a/b" or an integer.
inline Rational parse_rational(const std::string& s) {
    const auto slash = s.find('/');
    try {
        if (slash == std::string::npos) return Rational(std::stoull(s), 1);
        return Rational(std::stoull(s.substr(0, slash)), std::stoull(s.substr(slash + 1)));
    } catch (const std::logic_error&) {
        throw ConfigError("bad rational '" + s + "'");
    }
}

inline std::string to_string(const Rational& r) { return std::to_string(r.num) + "/" + std::to_string(r.den); }

// ---------------------------------------------------------------------------
// Marginal / ScalingFunction / QuantileModel
// ---------------------------------------------------------------------------

inline json to_json(const Marginal& m) {
    if (m.family() == Marginal::Family::Finite)
        return json{{"finite", {{"values", m.atoms()}, {"probs", m.probabilities()}}}};
    return json{{"family", m.name()}, {"params", m.params()}};
}

inline Marginal marginal_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    if (f.has("finite")) {
        Fields fin(f.raw("finite"), f.child("finite"));
        auto values = fin.get<std::vector<double>>("values");
        auto probs = fin.get<std::vector<double>>("probs");
        fin.finish();
        f.finish();
        try {
            return Marginal::finite(std::move(values), std::move(probs));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("'" + path + "': " + e.what());
        }
    }
    const auto family = f.get<std::string>("family");
    const auto params = f.get_or<std::vector<double>>("params", {});
    f.finish();
    auto need = [&](std::size_t k) {
        if (params.size() != k)
            throw ConfigError("'" + path + "." + "params' must have " + std::to_string(k) + " entries for " + family);
    };
    try {
        if (family == "normal") {
            if (params.empty()) return Marginal::normal();
            need(2);
            return Marginal::normal(params[0], params[1]);
        }
        if (family == "uniform") {
            if (params.empty()) return Marginal::uniform();
            need(2);
            return Marginal::uniform(params[0], params[1]);
        }
        if (family == "rademacher") {
            need(0);
            return Marginal::rademacher();
        }
        if (family == "point") {
            need(1);
            return Marginal::point(params[0]);
        }
        if (family == "cauchy") {
            if (params.empty()) return Marginal::cauchy();
            need(2);
            return Marginal::cauchy(params[0], params[1]);
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError("'" + path + "': " + e.what());
    }
    throw ConfigError("'" + path + ".family': unknown family '" + family + "'");
}

inline json to_json(const ScalingFunction& sf) {
    json j{{"kind", to_string(sf.kind)}};
    if (sf.kind == ScalingKind::TypeII) j["p"] = sf.p;
    if (sf.kind == ScalingKind::TypeII || sf.kind == ScalingKind::TypeIII) j["H"] = sf.H;
    return j;
}

inline ScalingFunction scaling_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    const auto kind = f.get<std::string>("kind");
    try {
        if (kind == "type1") {
            f.finish();
            return ScalingFunction::type1();
        }
        if (kind == "type2") {
            const auto p = f.get<std::uint64_t>("p");
            const auto H = f.get<double>("H");
            f.finish();
            return ScalingFunction::type2(p, H);
        }
        if (kind == "type3") {
            const auto H = f.get<double>("H");
            f.finish();
            return ScalingFunction::type3(H);
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError("'" + path + "': " + e.what());
    }
    throw ConfigError("'" + path + ".kind': unknown scaling kind '" + kind + "'");
}

inline json to_json(const QuantileModel& q) {
    if (q.is_empirical()) return json{{"empirical", q.sorted_sample()}};
    const char* name = "point";
    switch (q.family()) {
        case QuantileModel::Family::Uniform: name = "uniform"; break;
        case QuantileModel::Family::Rademacher: name = "rademacher"; break;
        case QuantileModel::Family::Normal: name = "normal"; break;
        case QuantileModel::Family::Point: name = "point"; break;
    }
    return json{{"analytic", {{"family", name}, {"params", q.params()}}}};
}

inline QuantileModel quantile_model_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    try {
        if (f.has("empirical")) {
            auto sample = f.get<std::vector<double>>("empirical");
            f.finish();
            return QuantileModel::empirical(std::move(sample));
        }
        Fields a(f.raw("analytic"), f.child("analytic"));
        const auto family = a.get<std::string>("family");
        const auto params = a.get_or<std::vector<double>>("params", {});
        a.finish();
        f.finish();
        if (family == "uniform" && params.size() == 2) return QuantileModel::uniform(params[0], params[1]);
        if (family == "normal" && params.size() == 2) return QuantileModel::normal(params[0], params[1]);
        if (family == "rademacher" && params.empty()) return QuantileModel::rademacher();
        if (family == "point" && params.size() == 1) return QuantileModel::point(params[0]);
        throw ConfigError("'" + path + ".analytic': unknown family or wrong parameter count for '" + family + "'");
    } catch (const std::invalid_argument& e) {
        throw ConfigError("'" + path + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Reports and tables
// ---------------------------------------------------------------------------

inline json to_json(const TestReport& r) {
    return json{{"statistic", r.statistic}, {"p_value", r.p_value}, {"alpha", r.alpha},
                {"decision", r.reject ? "reject" : "accept"}, {"n", r.n}, {"m", r.m}};
}

inline json to_json(const CoefficientTable& t) {
    json entries = json::array();
    for (const auto& k : t.keys()) {
        const auto v = t.at(k.m, k.l);
        entries.push_back({{"m", k.m}, {"l", k.l}, {"re", v.real()}, {"im", v.imag()}});
    }
    return json{{"p", t.p},
                {"H", t.H},
                {"N_used", t.N_used},
                {"constant", {{"re", t.constant_term.real()}, {"im", t.constant_term.imag()}}},
                {"entries", std::move(entries)}};
}

inline CoefficientTable table_from_json(const json& j) {
    Fields f(j, "table");
    const auto p = f.get<std::uint64_t>("p");
    const auto H = f.get<double>("H");
    const auto N = f.get<std::size_t>("N_used");
    Fields c(f.raw("constant"), "table.constant");
    const cplx constant(c.get<double>("re"), c.get<double>("im"));
    c.finish();
    const json& entries = f.raw("entries");
    f.finish();
    if (!entries.is_array()) throw ConfigError("'table.entries' must be an array");
    unsigned M = 0;
    for (const auto& e : entries) M = std::max(M, e.at("m").get<unsigned>());
    if (M == 0) throw ConfigError("'table.entries' is empty");
    auto t = CoefficientTable::zeros(p, H, M, N);
    t.constant_term = constant;
    std::size_t seen = 0;
    for (const auto& e : entries) {
        Fields ef(e, "table.entries[]");
        const auto m = ef.get<unsigned>("m");
        const auto l = ef.get<std::uint64_t>("l");
        const cplx v(ef.get<double>("re"), ef.get<double>("im"));
        ef.finish();
        try {
            t.at(m, l) = v;
        } catch (const std::out_of_range& ex) {
            throw ConfigError(std::string("'table.entries': ") + ex.what());
        }
        ++seen;
    }
    if (seen != t.entries.size()) throw ConfigError("'table.entries' does not cover every reduced residue");
    return t;
}

inline json to_json(const ConditionReport& r) {
    json entries = json::array();
    for (const auto& e : r.entries) {
        json j = to_json(e.report);
        j["key"] = {{"m", e.m}, {"l", e.l}};
        j["component"] = e.component;
        j["holm_reject"] = e.holm_reject;
        entries.push_back(std::move(j));
    }
    json moments = json::array();
    for (const auto& m : r.moments)
        moments.push_back({{"label", m.label}, {"estimate", m.estimate}, {"stderr", m.stderr_}, {"z", m.z},
                           {"p_value", m.p_value}, {"holm_reject", m.holm_reject}});
    return json{{"condition", r.condition}, {"alpha", r.alpha},     {"pass", r.pass},
                {"rejections", r.rejections()}, {"note", r.note}, {"entries", std::move(entries)},
                {"moments", std::move(moments)}};
}

inline json to_json(const GeneratorMeta& m) {
    json j{{"generator", m.generator}, {"N", m.N}, {"master_seed", m.master_seed}};
    if (m.p) j["p"] = m.p;
    if (m.H > 0.0) j["H"] = m.H;
    if (m.b > 0.0) j["b"] = m.b;
    if (m.depth) {
        j["K"] = *m.depth;
        j["tail_bound"] = m.tail_bound;
    }
    return j;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Header `path,n,value`, one row per (path, n).
inline void write_ensemble_csv(std::ostream& os, const PathEnsemble& ens) {
    os << "path,n,value\n";
    for (std::size_t i = 0; i < ens.size(); ++i)
        for (std::size_t n = 0; n < ens.paths[i].values.size(); ++n)
            os << i << ',' << n << ',' << format_double(ens.paths[i].values[n]) << '\n';
}

/// Header `n,value` for a single path.
inline void write_path_csv(std::ostream& os, const SamplePath& path) {
    os << "n,value\n";
    for (std::size_t n = 0; n < path.values.size(); ++n) os << n << ',' << format_double(path.values[n]) << '\n';
}

/// Reads `path,n,value` (or a single-path `n,value`). Paths must be
/// numbered 0.. consecutively, each with rows n = 0..N in order, all of the
/// same length.
inline PathEnsemble read_ensemble_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("ensemble CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const bool single = line == "n,value";
    if (!single && line != "path,n,value") throw ConfigError("ensemble CSV: unexpected header '" + line + "'");
    PathEnsemble ens;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != (single ? 2u : 3u)) throw ConfigError("ensemble CSV: bad row " + std::to_string(row));
        try {
            const std::size_t path = single ? 0 : std::stoull(cells[0]);
            const std::size_t n = std::stoull(cells[single ? 0 : 1]);
            const double v = parse_double(cells[single ? 1 : 2]);
            if (path == ens.paths.size()) ens.paths.emplace_back();
            if (path + 1 != ens.paths.size() || n != ens.paths.back().values.size())
                throw ConfigError("ensemble CSV: rows out of order at line " + std::to_string(row));
            ens.paths.back().values.push_back(v);
        } catch (const std::logic_error&) {
            throw ConfigError("ensemble CSV: bad number at line " + std::to_string(row));
        }
    }
    if (ens.paths.empty()) throw ConfigError("ensemble CSV has no rows");
    for (const auto& p : ens.paths)
        if (p.values.size() != ens.paths.front().values.size())
            throw ConfigError("ensemble CSV: paths have different lengths");
    auto meta = std::make_shared<GeneratorMeta>();
    meta->generator = "csv";
    meta->N = ens.paths.front().N();
    ens.meta = meta;
    for (auto& p : ens.paths) p.meta = meta;
    return ens;
}

}  // namespace dtss
