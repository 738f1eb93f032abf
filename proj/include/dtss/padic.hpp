#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dtss {

/// Deterministic primality test for 64-bit integers (trial division is
/// enough for the prime sizes used as scaling bases).
constexpr bool is_prime(std::uint64_t n) noexcept {
    if (n < 2) return false;
    if (n % 2 == 0) return n == 2;
    if (n % 3 == 0) return n == 3;
    for (std::uint64_t d = 5; d <= n / d; d += 6) {
        if (n % d == 0 || n % (d + 2) == 0) return false;
    }
    return true;
}

/// The first `count` primes in increasing order.
inline std::vector<std::uint64_t> first_primes(std::size_t count) {
    std::vector<std::uint64_t> out;
    for (std::uint64_t n = 2; out.size() < count; ++n) {
        if (is_prime(n)) out.push_back(n);
    }
    return out;
}

/// p^e with overflow detection.
inline std::uint64_t checked_pow(std::uint64_t base, unsigned exponent,
                                 std::uint64_t limit = std::uint64_t{1} << 62) {
    std::uint64_t r = 1;
    for (unsigned i = 0; i < exponent; ++i) {
        if (r > limit / base) throw std::overflow_error("integer power exceeds index range");
        r *= base;
    }
    return r;
}

/// Exact nonnegative rational num/den kept in lowest terms.
struct Rational {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    constexpr Rational() = default;
    Rational(std::uint64_t n, std::uint64_t d) : num(n), den(d) {
        if (d == 0) throw std::invalid_argument("Rational: zero denominator");
        const auto g = std::gcd(num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
        if (num == 0) den = 1;
    }

    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }

    friend Rational operator*(const Rational& a, const Rational& b) {
        // cross-reduce first so the products stay small
        const auto g1 = std::gcd(a.num, b.den);
        const auto g2 = std::gcd(b.num, a.den);
        const auto n1 = g1 ? a.num / g1 : a.num, d2 = g1 ? b.den / g1 : b.den;
        const auto n2 = g2 ? b.num / g2 : b.num, d1 = g2 ? a.den / g2 : a.den;
        return Rational(n1 * n2, d1 * d2);
    }
    friend bool operator==(const Rational&, const Rational&) = default;
    friend bool operator<(const Rational& a, const Rational& b) {
        return static_cast<unsigned __int128>(a.num) * b.den <
               static_cast<unsigned __int128>(b.num) * a.den;
    }
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
};

namespace detail {
inline void require_valuation_args(std::uint64_t n, std::uint64_t p) {
    if (n == 0) throw std::domain_error("p-adic valuation is only defined here for n >= 1");
    if (!is_prime(p)) throw std::invalid_argument("p-adic valuation requires a prime base, got " + std::to_string(p));
}
}  // namespace detail

/// Largest v with p^v | n.
inline unsigned p_adic_valuation(std::uint64_t n, std::uint64_t p) {
    detail::require_valuation_args(n, p);
    unsigned v = 0;
    while (n % p == 0) {
        n /= p;
        ++v;
    }
    return v;
}

/// |n|_p = p^{-v_p(n)} as an exact rational.
inline Rational p_adic_norm(std::uint64_t n, std::uint64_t p) {
    const unsigned v = p_adic_valuation(n, p);
    return Rational(1, checked_pow(p, v, UINT64_MAX));
}

enum class ScalingKind { TypeI, TypeII, TypeIII, NonConforming };

inline const char* to_string(ScalingKind k) {
    switch (k) {
        case ScalingKind::TypeI: return "type1";
        case ScalingKind::TypeII: return "type2";
        case ScalingKind::TypeIII: return "type3";
        case ScalingKind::NonConforming: return "nonconforming";
    }
    return "?";
}

/// The completely multiplicative scaling function b(n) of a discrete-time
/// self-similar process. Conforming kinds are
///   TypeI:   b(n) = 1
///   TypeII:  b(n) = (|n|_p)^H
///   TypeIII: b(n) = n^H
/// `prime_values` keeps the (prime, b(prime)) pairs a classified function
/// was built from; it is empty for functions built directly.
struct ScalingFunction {
    ScalingKind kind = ScalingKind::TypeI;
    std::uint64_t p = 0;
    double H = 0.0;
    std::vector<std::pair<std::uint64_t, double>> prime_values;

    static ScalingFunction type1() { return {ScalingKind::TypeI, 0, 0.0, {}}; }

    static ScalingFunction type2(std::uint64_t p, double H) {
        if (!is_prime(p)) throw std::invalid_argument("TypeII scaling needs a prime p");
        if (!(H > 0.0) || !std::isfinite(H)) throw std::invalid_argument("TypeII scaling needs H > 0");
        return {ScalingKind::TypeII, p, H, {}};
    }

    static ScalingFunction type3(double H) {
        if (!(H > 0.0) || !std::isfinite(H)) throw std::invalid_argument("TypeIII scaling needs H > 0");
        return {ScalingKind::TypeIII, 0, H, {}};
    }

    bool conforming() const { return kind != ScalingKind::NonConforming; }
};

/// b(n) for n >= 1.
inline double scaling_eval(const ScalingFunction& sf, std::uint64_t n) {
    if (n == 0) throw std::domain_error("scaling function is indexed by n >= 1");
    switch (sf.kind) {
        case ScalingKind::TypeI: return 1.0;
        case ScalingKind::TypeII: return std::pow(p_adic_norm(n, sf.p).to_double(), sf.H);
        case ScalingKind::TypeIII: return std::pow(static_cast<double>(n), sf.H);
        case ScalingKind::NonConforming: break;
    }
    throw std::invalid_argument("cannot evaluate a non-conforming scaling function");
}

namespace detail {
inline bool rel_close(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}
}  // namespace detail

/// Classify a scaling function from its values on a set of primes.
///
/// At most one prime may carry a value below 1 (TypeII); otherwise either
/// every value is 1 (TypeI) or every value is p^H for a common H > 0
/// (TypeIII). Anything else is NonConforming. H for TypeIII is the mean of
/// log_p(value), then checked against every prime within `tol`.
inline ScalingFunction classify_scaling(const std::vector<std::pair<std::uint64_t, double>>& prime_values,
                                        double tol = 1e-9) {
    if (prime_values.empty()) throw std::invalid_argument("classify_scaling: empty input");
    for (const auto& [q, v] : prime_values) {
        if (!is_prime(q)) throw std::invalid_argument("classify_scaling: " + std::to_string(q) + " is not prime");
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("classify_scaling: values must be positive");
    }
    if (prime_values.size() < 2) throw std::invalid_argument("classify_scaling: need at least two primes");

    ScalingFunction out;
    out.prime_values = prime_values;

    std::size_t n_one = 0;
    std::vector<std::size_t> below;
    for (std::size_t i = 0; i < prime_values.size(); ++i) {
        const double v = prime_values[i].second;
        if (detail::rel_close(v, 1.0, tol)) {
            ++n_one;
        } else if (v < 1.0) {
            below.push_back(i);
        }
    }

    if (n_one == prime_values.size()) {
        out.kind = ScalingKind::TypeI;
        return out;
    }
    if (below.size() == 1 && n_one + 1 == prime_values.size()) {
        const auto [q, v] = prime_values[below.front()];
        out.kind = ScalingKind::TypeII;
        out.p = q;
        out.H = -std::log(v) / std::log(static_cast<double>(q));
        return out;
    }

    double sum = 0.0;
    for (const auto& [q, v] : prime_values) sum += std::log(v) / std::log(static_cast<double>(q));
    const double H = sum / static_cast<double>(prime_values.size());
    bool consistent = H > 0.0;
    for (const auto& [q, v] : prime_values) {
        if (!consistent) break;
        consistent = detail::rel_close(std::pow(static_cast<double>(q), H), v, tol);
    }
    if (consistent) {
        out.kind = ScalingKind::TypeIII;
        out.H = H;
        return out;
    }
    out.kind = ScalingKind::NonConforming;
    return out;
}

}  // namespace dtss
