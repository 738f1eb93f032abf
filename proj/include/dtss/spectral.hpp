#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtss/generators.hpp"
#include "dtss/padic.hpp"
#include "dtss/stats.hpp"

namespace dtss {

using cplx = std::complex<double>;

/// Raised when a path is shorter than the requested averaging horizon.
class InsufficientLength : public std::length_error {
public:
    InsufficientLength(std::size_t required, std::size_t available)
        : std::length_error("path too short: need X_0..X_" + std::to_string(required) + " (" +
                            std::to_string(required + 1) + " values), have " + std::to_string(available)),
          required_(required) {}
    std::size_t required() const { return required_; }

private:
    std::size_t required_;
};

/// e(num/den) = exp(2 pi i num/den), computed from the reduced fraction so
/// the trig argument stays in [-pi, pi]. Quarter turns are exact.
inline cplx unit_phase(std::uint64_t num, std::uint64_t den) {
    const std::uint64_t r = num % den;
    if (r == 0) return {1.0, 0.0};
    if ((4 * r) % den == 0) {
        switch ((4 * r) / den) {
            case 1: return {0.0, 1.0};
            case 2: return {-1.0, 0.0};
            default: return {0.0, -1.0};
        }
    }
    double frac = static_cast<double>(r) / static_cast<double>(den);
    if (frac > 0.5) frac -= 1.0;
    return std::polar(1.0, 2.0 * std::numbers::pi * frac);
}

/// (1/N) sum_{n=1}^{N} X_n e(-n lambda), lambda = num/den in [0, 1).
inline cplx fourier_coefficient(std::span<const double> x, const Rational& lambda, std::size_t N) {
    if (N == 0) throw std::invalid_argument("fourier_coefficient: horizon must be positive");
    if (lambda.num >= lambda.den) throw std::invalid_argument("fourier_coefficient: lambda must lie in [0, 1)");
    if (x.size() < N + 1) throw InsufficientLength(N, x.size());
    const std::uint64_t den = lambda.den;
    const std::uint64_t step = den - lambda.num % den;  // -lambda mod 1
    cplx sum = 0.0;
    std::uint64_t idx = 0;
    for (std::size_t n = 1; n <= N; ++n) {
        idx = (idx + step) % den;
        sum += x[n] * unit_phase(idx, den);
    }
    return sum / static_cast<double>(N);
}

inline cplx fourier_coefficient(const SamplePath& path, const Rational& lambda, std::size_t N) {
    return fourier_coefficient(std::span<const double>(path.values), lambda, N);
}

struct CoefficientKey {
    unsigned m = 1;
    std::uint64_t l = 1;
    friend bool operator==(const CoefficientKey&, const CoefficientKey&) = default;
};

/// Coefficients A^(m)_l at the reduced p-adic frequencies l/p^m,
/// 1 <= m <= M_max, stored layer by layer.
struct CoefficientTable {
    std::uint64_t p = 2;
    double H = 0.5;
    unsigned M_max = 0;
    std::size_t N_used = 0;
    cplx constant_term = 0.0;
    // Increment tables represent X_{n+1} - X_n = sum A e(n lambda) rather than
    // X_n = sum A (e(n lambda) - 1).
    bool increments = false;
    std::vector<cplx> entries;

    static std::size_t layer_offset(std::uint64_t p, unsigned m) { return static_cast<std::size_t>(checked_pow(p, m - 1) - 1); }

    std::size_t slot(unsigned m, std::uint64_t l) const {
        if (m < 1 || m > M_max) throw std::out_of_range("coefficient table: layer out of range");
        const std::uint64_t P = checked_pow(p, m);
        if (l == 0 || l >= P || l % p == 0) throw std::out_of_range("coefficient table: residue not reduced");
        return layer_offset(p, m) + static_cast<std::size_t>(l - l / p - 1);
    }

    cplx& at(unsigned m, std::uint64_t l) { return entries[slot(m, l)]; }
    const cplx& at(unsigned m, std::uint64_t l) const { return entries[slot(m, l)]; }

    std::vector<CoefficientKey> keys() const { return layer_keys(1, M_max); }

    std::vector<CoefficientKey> layer_keys(unsigned from, unsigned to) const {
        std::vector<CoefficientKey> out;
        for (unsigned m = from; m <= to; ++m) {
            const std::uint64_t P = checked_pow(p, m);
            for (std::uint64_t l = 1; l < P; ++l)
                if (l % p != 0) out.push_back({m, l});
        }
        return out;
    }

    /// An all-zero table with the given shape.
    static CoefficientTable zeros(std::uint64_t p, double H, unsigned M_max, std::size_t N_used = 0) {
        if (!is_prime(p)) throw std::invalid_argument("coefficient table: p must be prime");
        if (M_max < 1) throw std::invalid_argument("coefficient table: M_max must be at least 1");
        CoefficientTable t;
        t.p = p;
        t.H = H;
        t.M_max = M_max;
        t.N_used = N_used;
        t.entries.assign(layer_offset(p, M_max + 1), cplx(0.0));
        return t;
    }
};

namespace detail {

/// Radix-p decimation in time: out[k] = sum_n in[n stride] e(-n k / n_len).
inline void dft_radix_p(const cplx* in, std::size_t stride, std::size_t n_len, cplx* out, std::uint64_t p,
                        const std::vector<cplx>& twiddle, std::size_t tw_step, std::vector<cplx>& scratch) {
    if (n_len == 1) {
        out[0] = in[0];
        return;
    }
    const std::size_t sub = n_len / p;
    for (std::uint64_t r = 0; r < p; ++r)
        dft_radix_p(in + r * stride, stride * p, sub, out + r * sub, p, twiddle, tw_step * p, scratch);
    const std::size_t P = twiddle.size();
    scratch.assign(n_len, cplx(0.0));
    for (std::size_t k = 0; k < n_len; ++k) {
        cplx acc = 0.0;
        for (std::uint64_t r = 0; r < p; ++r)
            acc += twiddle[static_cast<std::size_t>((r * k * tw_step) % P)] * out[r * sub + k % sub];
        scratch[k] = acc;
    }
    std::copy(scratch.begin(), scratch.end(), out);
}

/// Full DFT of a length-p^M vector, F[k] = sum_n x[n] e(-n k / p^M).
inline std::vector<cplx> dft_p_power(const std::vector<cplx>& x, std::uint64_t p) {
    const std::size_t P = x.size();
    std::vector<cplx> twiddle(P);
    for (std::size_t j = 0; j < P; ++j) twiddle[j] = unit_phase(P - j, P);
    std::vector<cplx> out(P), scratch;
    dft_radix_p(x.data(), 1, P, out.data(), p, twiddle, 1, scratch);
    return out;
}

}  // namespace detail

inline constexpr std::size_t kDefaultPeriods = 8;

/// Every reduced p-adic coefficient up to layer M_max at horizon
/// N = R p^{M_max}. The path is folded by residue mod p^{M_max} and one
/// radix-p DFT yields all layers at once.
inline CoefficientTable coefficient_table(std::span<const double> x, std::uint64_t p, double H, unsigned M_max,
                                          std::size_t R = kDefaultPeriods) {
    if (R == 0) throw std::invalid_argument("coefficient_table: R must be positive");
    auto table = CoefficientTable::zeros(p, H, M_max);
    const std::uint64_t P = checked_pow(p, M_max, std::uint64_t{1} << 40);
    if (P > std::numeric_limits<std::size_t>::max() / R) throw std::overflow_error("coefficient_table: horizon overflows");
    const std::size_t N = static_cast<std::size_t>(P) * R;
    if (x.size() < N + 1) throw InsufficientLength(N, x.size());
    table.N_used = N;

    std::vector<cplx> folded(P, cplx(0.0));
    for (std::size_t n = 1; n <= N; ++n) folded[n % P] += x[n];
    const auto F = detail::dft_p_power(folded, p);
    const double inv = 1.0 / static_cast<double>(N);
    table.constant_term = F[0] * inv;
    for (const auto& key : table.keys()) {
        const std::uint64_t k = key.l * checked_pow(p, M_max - key.m);
        table.at(key.m, key.l) = F[k] * inv;
    }
    return table;
}

inline CoefficientTable coefficient_table(const SamplePath& path, std::uint64_t p, double H, unsigned M_max,
                                          std::size_t R = kDefaultPeriods) {
    return coefficient_table(std::span<const double>(path.values), p, H, M_max, R);
}

inline std::vector<CoefficientTable> coefficient_tables(const PathEnsemble& ens, std::uint64_t p, double H,
                                                        unsigned M_max, std::size_t R = kDefaultPeriods) {
    std::vector<CoefficientTable> out;
    out.reserve(ens.size());
    for (const auto& path : ens.paths) out.push_back(coefficient_table(path, p, H, M_max, R));
    return out;
}

/// A^(m)_l (e(l/p^m) - 1): coefficients of the increment sequence.
inline CoefficientTable increment_table(const CoefficientTable& table) {
    CoefficientTable out = table;
    out.constant_term = 0.0;
    out.increments = true;
    for (const auto& key : table.keys())
        out.at(key.m, key.l) = table.at(key.m, key.l) * (unit_phase(key.l, checked_pow(table.p, key.m)) - 1.0);
    return out;
}

struct Reconstruction {
    double value = 0.0;
    double imag = 0.0;  // diagnostic; ~0 for tables from real paths
};

/// sum A (e(n l/p^m) - 1) for level tables, sum A e(n l/p^m) for increment
/// tables.
inline Reconstruction reconstruct(const CoefficientTable& table, std::uint64_t n) {
    cplx sum = 0.0;
    for (const auto& key : table.keys()) {
        const std::uint64_t P = checked_pow(table.p, key.m);
        const cplx phase = unit_phase(detail::mulmod(n % P, key.l, P), P);
        sum += table.at(key.m, key.l) * (table.increments ? phase : phase - 1.0);
    }
    return {sum.real(), sum.imag()};
}

namespace detail {

inline void require_tables(const std::vector<CoefficientTable>& tables, std::size_t min_count, const char* who) {
    if (tables.empty()) throw std::invalid_argument(std::string(who) + ": no tables");
    if (tables.size() < min_count)
        throw std::invalid_argument(std::string(who) + ": need at least " + std::to_string(min_count) +
                                    " tables, got " + std::to_string(tables.size()));
    const auto& t0 = tables.front();
    for (const auto& t : tables)
        if (t.p != t0.p || t.M_max != t0.M_max || t.increments != t0.increments)
            throw std::invalid_argument(std::string(who) + ": tables have mismatched shapes");
}

inline Estimate mean_estimate(const std::vector<double>& v) {
    Estimate e;
    if (v.empty()) return e;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    e.value = mean;
    if (v.size() < 2) return e;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    e.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    return e;
}

}  // namespace detail

/// Monte Carlo estimate of sum_{l in layer m} E|A^(m)_l|^2.
inline Estimate layer_energy(const std::vector<CoefficientTable>& tables, unsigned m) {
    detail::require_tables(tables, 1, "layer_energy");
    if (m < 1 || m > tables.front().M_max) throw std::out_of_range("layer_energy: layer out of range");
    const auto keys = tables.front().layer_keys(m, m);
    std::vector<double> per;
    per.reserve(tables.size());
    for (const auto& t : tables) {
        double e = 0.0;
        for (const auto& k : keys) e += std::norm(t.at(k.m, k.l));
        per.push_back(e);
    }
    return detail::mean_estimate(per);
}

/// E| sum_{m=from}^{M_max} sum_l A^(m)_l e(n l/p^m) |^2 over the tables.
inline Estimate tail_energy(const std::vector<CoefficientTable>& tables, unsigned from, std::uint64_t n) {
    detail::require_tables(tables, 1, "tail_energy");
    const auto& t0 = tables.front();
    if (from < 1 || from > t0.M_max) throw std::out_of_range("tail_energy: layer out of range");
    const auto keys = t0.layer_keys(from, t0.M_max);
    std::vector<cplx> phase;
    for (const auto& k : keys) {
        const std::uint64_t P = checked_pow(t0.p, k.m);
        phase.push_back(unit_phase(detail::mulmod(n % P, k.l, P), P));
    }
    std::vector<double> per;
    for (const auto& t : tables) {
        cplx s = 0.0;
        for (std::size_t i = 0; i < keys.size(); ++i) s += t.at(keys[i].m, keys[i].l) * phase[i];
        per.push_back(std::norm(s));
    }
    return detail::mean_estimate(per);
}

/// Sum of layer energies from..to when E_m = p^{-2(m-1)H} E_1:
/// E_1 (r^{from-1} - r^{to}) / (1 - r) with r = p^{-2H}.
inline double tail_energy_bound(std::uint64_t p, double H, unsigned from, unsigned to, double layer1_energy) {
    if (from < 1 || to < from) throw std::invalid_argument("tail_energy_bound: need 1 <= from <= to");
    const double r = std::pow(static_cast<double>(p), -2.0 * H);
    return layer1_energy * (std::pow(r, from - 1.0) - std::pow(r, to)) / (1.0 - r);
}

// ---------------------------------------------------------------------------
// Condition checks
// ---------------------------------------------------------------------------

inline constexpr const char* kProxyNote =
    "distributional identities of coefficient sequences are checked through marginal KS tests on real part, "
    "imaginary part and modulus plus moment z-tests; this is a proxy for equality of joint laws";

struct EntryCheck {
    unsigned m = 1;
    std::uint64_t l = 1;
    std::string component;  // "re", "im", "abs"
    TestReport report;
    bool holm_reject = false;
};

struct MomentCheck {
    std::string label;
    double estimate = 0.0;
    double stderr_ = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    bool holm_reject = false;
};

struct ConditionReport {
    std::string condition;
    double alpha = kDefaultAlpha;
    std::vector<EntryCheck> entries;
    std::vector<MomentCheck> moments;
    bool pass = true;
    std::string note = kProxyNote;

    std::size_t rejections() const {
        std::size_t r = 0;
        for (const auto& e : entries) r += e.holm_reject;
        for (const auto& m : moments) r += m.holm_reject;
        return r;
    }
};

namespace detail {

/// Two-sided z-test that E[v] = 0. A zero standard error (deterministic
/// input) accepts exactly when the mean vanishes.
inline MomentCheck zero_mean_test(std::string label, const std::vector<double>& v) {
    const Estimate e = mean_estimate(v);
    MomentCheck c;
    c.label = std::move(label);
    c.estimate = e.value;
    c.stderr_ = e.stderr_;
    if (e.stderr_ > 0.0) {
        c.z = e.value / e.stderr_;
        c.p_value = std::erfc(std::abs(c.z) / std::numbers::sqrt2);
    } else {
        c.z = 0.0;
        c.p_value = std::abs(e.value) <= 1e-12 ? 1.0 : 0.0;
    }
    return c;
}

inline void finalize(ConditionReport& rep) {
    std::vector<double> p;
    for (const auto& e : rep.entries) p.push_back(e.report.p_value);
    for (const auto& m : rep.moments) p.push_back(m.p_value);
    const auto rej = holm_reject(p, rep.alpha);
    rep.pass = true;
    std::size_t i = 0;
    for (auto& e : rep.entries) {
        e.holm_reject = rej[i++];
        rep.pass = rep.pass && !e.holm_reject;
    }
    for (auto& m : rep.moments) {
        m.holm_reject = rej[i++];
        rep.pass = rep.pass && !m.holm_reject;
    }
}

using ComplexSelector = std::function<cplx(std::size_t)>;

/// Half-split KS on re, im and |.| of two complex functionals.
inline void compare_complex(ConditionReport& rep, CoefficientKey key, std::size_t count, const ComplexSelector& f,
                            const ComplexSelector& g, bool identical, bool with_modulus) {
    struct Part {
        const char* name;
        double (*take)(const cplx&);
    };
    static constexpr Part parts[] = {{"re", [](const cplx& z) { return z.real(); }},
                                     {"im", [](const cplx& z) { return z.imag(); }},
                                     {"abs", [](const cplx& z) { return std::abs(z); }}};
    for (const auto& part : parts) {
        if (!with_modulus && std::string(part.name) == "abs") continue;
        EntryCheck c;
        c.m = key.m;
        c.l = key.l;
        c.component = part.name;
        c.report = identical ? identical_samples_report(count, rep.alpha)
                             : split_half_ks(
                                   count, [&](std::size_t i) { return part.take(f(i)); },
                                   [&](std::size_t i) { return part.take(g(i)); }, rep.alpha);
        rep.entries.push_back(std::move(c));
    }
}

inline std::string key_label(CoefficientKey k) { return "(" + std::to_string(k.m) + "," + std::to_string(k.l) + ")"; }

}  // namespace detail

/// A^(m)_l against e(l/p^m) A^(m)_l for every entry, plus z-tests that
/// E[A_1 conj(A_2)] vanishes for every pair of distinct entries.
inline ConditionReport check_rotation(const std::vector<CoefficientTable>& tables, double alpha = kDefaultAlpha) {
    detail::require_tables(tables, kMinEnsembleForTests, "check_rotation");
    ConditionReport rep;
    rep.condition = "rotation";
    rep.alpha = alpha;
    const auto keys = tables.front().keys();
    const std::uint64_t p = tables.front().p;
    for (const auto& key : keys) {
        const cplx phase = unit_phase(key.l, checked_pow(p, key.m));
        detail::compare_complex(
            rep, key, tables.size(), [&](std::size_t i) { return tables[i].at(key.m, key.l); },
            [&](std::size_t i) { return phase * tables[i].at(key.m, key.l); }, phase == cplx(1.0), true);
    }
    std::vector<double> re(tables.size()), im(tables.size());
    for (std::size_t a = 0; a < keys.size(); ++a)
        for (std::size_t b = a + 1; b < keys.size(); ++b) {
            for (std::size_t i = 0; i < tables.size(); ++i) {
                const cplx v = tables[i].at(keys[a].m, keys[a].l) * std::conj(tables[i].at(keys[b].m, keys[b].l));
                re[i] = v.real();
                im[i] = v.imag();
            }
            const std::string label = "cross" + detail::key_label(keys[a]) + detail::key_label(keys[b]);
            rep.moments.push_back(detail::zero_mean_test(label + ".re", re));
            rep.moments.push_back(detail::zero_mean_test(label + ".im", im));
        }
    detail::finalize(rep);
    return rep;
}

/// p^{-H} A^(m)_l against sum_{t<p} A^(m+1)_{t p^m + l}, m < M_max.
inline ConditionReport check_scaling_relation(const std::vector<CoefficientTable>& tables,
                                              double alpha = kDefaultAlpha) {
    detail::require_tables(tables, kMinEnsembleForTests, "check_scaling_relation");
    const auto& t0 = tables.front();
    if (t0.M_max < 2) throw std::invalid_argument("check_scaling_relation: need M_max >= 2");
    ConditionReport rep;
    rep.condition = "scaling_relation";
    rep.alpha = alpha;
    const std::uint64_t p = t0.p;
    const double factor = std::pow(static_cast<double>(p), -t0.H);
    for (const auto& key : t0.layer_keys(1, t0.M_max - 1)) {
        const std::uint64_t P = checked_pow(p, key.m);
        auto lhs = [&](std::size_t i) { return factor * tables[i].at(key.m, key.l); };
        auto rhs = [&](std::size_t i) {
            cplx s = 0.0;
            for (std::uint64_t t = 0; t < p; ++t) s += tables[i].at(key.m + 1, t * P + key.l);
            return s;
        };
        detail::compare_complex(rep, key, tables.size(), lhs, rhs, false, false);
        std::vector<double> dre, dim, dsq;
        for (std::size_t i = 0; i < tables.size(); ++i) {
            const cplx a = lhs(i), b = rhs(i);
            dre.push_back(a.real() - b.real());
            dim.push_back(a.imag() - b.imag());
            dsq.push_back(std::norm(a) - std::norm(b));
        }
        const std::string label = detail::key_label(key);
        rep.moments.push_back(detail::zero_mean_test(label + ".mean_re", dre));
        rep.moments.push_back(detail::zero_mean_test(label + ".mean_im", dim));
        rep.moments.push_back(detail::zero_mean_test(label + ".second_moment", dsq));
    }
    detail::finalize(rep);
    return rep;
}

/// A^(m)_l against A^(m)_{[q l]}, [q l] the residue of q l mod p^m.
inline ConditionReport check_q_permutation(const std::vector<CoefficientTable>& tables, std::uint64_t q,
                                           double alpha = kDefaultAlpha) {
    detail::require_tables(tables, kMinEnsembleForTests, "check_q_permutation");
    const std::uint64_t p = tables.front().p;
    if (q == p) throw std::invalid_argument("check_q_permutation: q must differ from p");
    if (!is_prime(q)) throw std::invalid_argument("check_q_permutation: q must be prime");
    ConditionReport rep;
    rep.condition = "q_permutation";
    rep.alpha = alpha;
    for (const auto& key : tables.front().keys()) {
        const std::uint64_t P = checked_pow(p, key.m);
        const std::uint64_t target = detail::mulmod(q % P, key.l, P);
        detail::compare_complex(
            rep, key, tables.size(), [&](std::size_t i) { return tables[i].at(key.m, key.l); },
            [&](std::size_t i) { return tables[i].at(key.m, target); }, target == key.l, true);
    }
    detail::finalize(rep);
    return rep;
}

// ---------------------------------------------------------------------------
// Off-grid frequencies and almost periods
// ---------------------------------------------------------------------------

struct OffGridReport {
    Rational lambda;
    unsigned m = 0;
    std::size_t N = 0;
    Estimate energy;             // E|a(lambda)|^2 at horizon N
    double second_moment = 0.0;  // E X_1^2
    double max_second_moment = 0.0;
    double bound = 0.0;  // p^{-2mH} E X_1^2
    double slack = 0.0;
    bool holds = false;
};

/// True when p^k lambda is an integer for some k.
inline bool is_p_adic(const Rational& lambda, std::uint64_t p) {
    std::uint64_t d = lambda.den;
    while (d % p == 0) d /= p;
    return d == 1;
}

/// E|a(lambda)|^2 at N = R p^m for a frequency outside the p-adic grid,
/// with the finite-horizon slack 4 (2 / (sqrt(N) |1 - e(-p^m lambda)|))^2 max_j E X_j^2.
inline OffGridReport offgrid_energy(const PathEnsemble& ens, const Rational& lambda, std::uint64_t p, double H,
                                    unsigned m, std::size_t R = kDefaultPeriods) {
    if (!is_prime(p)) throw std::invalid_argument("offgrid_energy: p must be prime");
    if (lambda.num >= lambda.den) throw std::invalid_argument("offgrid_energy: lambda must lie in [0, 1)");
    if (is_p_adic(lambda, p)) throw std::invalid_argument("offgrid_energy: lambda is a p-adic rational");
    if (ens.size() == 0) throw std::invalid_argument("offgrid_energy: empty ensemble");
    OffGridReport rep;
    rep.lambda = lambda;
    rep.m = m;
    const std::uint64_t P = checked_pow(p, m, std::uint64_t{1} << 40);
    rep.N = static_cast<std::size_t>(P) * R;
    if (ens.N() < rep.N) throw InsufficientLength(rep.N, ens.N() + 1);

    std::vector<double> energy;
    for (const auto& path : ens.paths) energy.push_back(std::norm(fourier_coefficient(path, lambda, rep.N)));
    rep.energy = detail::mean_estimate(energy);
    for (std::size_t j = 1; j <= rep.N; ++j) {
        double s = 0.0;
        for (const auto& path : ens.paths) s += path.values[j] * path.values[j];
        s /= static_cast<double>(ens.size());
        if (j == 1) rep.second_moment = s;
        rep.max_second_moment = std::max(rep.max_second_moment, s);
    }
    rep.bound = std::pow(static_cast<double>(p), -2.0 * m * H) * rep.second_moment;
    const std::uint64_t shift = detail::mulmod(P % lambda.den, lambda.num, lambda.den);
    const double gap = std::abs(1.0 - unit_phase(lambda.den - shift, lambda.den));
    const double ratio = 2.0 / (std::sqrt(static_cast<double>(rep.N)) * gap);
    rep.slack = 4.0 * ratio * ratio * rep.max_second_moment;
    rep.holds = rep.energy.value <= rep.bound + rep.slack;
    return rep;
}

/// N(eps) = p^{ceil(-(1/(2H)) log_p(eps / E X_1^2))}, exponent clamped at 0.
inline std::uint64_t almost_period(double epsilon, std::uint64_t p, double H, double second_moment) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("almost_period: epsilon must be positive");
    if (!(H > 0.0)) throw std::invalid_argument("almost_period: H must be positive");
    if (!(second_moment > 0.0)) throw std::invalid_argument("almost_period: second moment must be positive");
    if (!is_prime(p)) throw std::invalid_argument("almost_period: p must be prime");
    const double x = -std::log(epsilon / second_moment) / (2.0 * H * std::log(static_cast<double>(p)));
    const double e = std::max(0.0, std::ceil(x - 1e-9));
    return checked_pow(p, static_cast<unsigned>(e));
}

}  // namespace dtss
