#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtss/distribution.hpp"
#include "dtss/padic.hpp"
#include "dtss/rng.hpp"

namespace dtss {

/// Largest p^{K+1} the periodic index arithmetic accepts.
inline constexpr std::uint64_t kMaxPeriod = std::uint64_t{1} << 62;

struct GeneratorMeta {
    std::string generator;  // "type1_iid", "type2_iid", "type2_shift", ...
    std::uint64_t p = 0;
    double H = 0.0;
    double b = 0.0;
    std::optional<unsigned> depth;  // series truncation K, when the construction is a series
    double tail_bound = 0.0;        // geometric bound on the omitted terms, sum_{k>K} b^k
    std::size_t N = 0;
    std::uint64_t master_seed = 0;
};

struct SamplePath {
    std::vector<double> values;  // X_0 .. X_N
    std::uint64_t seed = 0;
    std::shared_ptr<const GeneratorMeta> meta;

    std::size_t N() const { return values.empty() ? 0 : values.size() - 1; }
    double operator[](std::size_t n) const { return values[n]; }
};

struct PathEnsemble {
    std::vector<SamplePath> paths;
    std::shared_ptr<const GeneratorMeta> meta;
    std::uint64_t master_seed = 0;

    std::size_t size() const { return paths.size(); }
    std::size_t N() const { return paths.empty() ? 0 : paths.front().N(); }

    /// X_n across all paths.
    std::vector<double> column(std::size_t n) const {
        std::vector<double> out;
        out.reserve(paths.size());
        for (const auto& path : paths) {
            if (n >= path.values.size()) throw std::out_of_range("ensemble index beyond path length");
            out.push_back(path.values[n]);
        }
        return out;
    }
};

/// Example 4.1 style construction: layered i.i.d. periodic sequences.
struct Ex41Config {
    std::uint64_t p = 2;
    double H = 0.5;                 // b = p^{-H}
    std::optional<unsigned> depth;  // K; defaults to default_depth(b)
    Marginal y_marginal = Marginal::normal();
    std::size_t N = 16;

    double b() const { return std::pow(static_cast<double>(p), -H); }
};

/// Shift vector u of the Example 4.2 style construction. Either fixed
/// entries summing to zero, or p i.i.d. draws from `random` centred by
/// subtracting their mean (shared by all layers, or an independent copy
/// per layer).
struct ShiftVector {
    std::vector<double> fixed;
    std::optional<Marginal> random;
    bool independent_per_layer = false;
};

/// Example 4.2 style construction: randomly shifted zero-sum periodic
/// patterns with uniformly selected stride per layer.
struct Ex42Config {
    std::uint64_t p = 2;
    double b = 0.5;
    ShiftVector u{{1.0, -1.0}, std::nullopt, false};
    std::optional<unsigned> depth;
    std::size_t N = 16;

    double H() const { return -std::log(b) / std::log(static_cast<double>(p)); }
};

namespace family {
inline constexpr std::uint64_t kY = 1, kShiftU = 2, kSelector = 3, kShift = 4, kGauss = 5, kMarginal = 6;
}

/// Smallest K with b^K <= 1e-12, capped so that p^{K+1} stays within the
/// index range.
inline unsigned default_depth(double b, std::uint64_t p) {
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("default_depth: need 0 < b < 1");
    auto k = static_cast<unsigned>(std::ceil(std::log(1e-12) / std::log(b)));
    unsigned cap = 0;
    for (std::uint64_t period = p; period <= kMaxPeriod / p; period *= p) ++cap;
    return std::min(k, cap);
}

/// p^{K+1} for a truncation depth, rejecting values beyond the index range.
inline std::uint64_t layer_period(std::uint64_t p, unsigned k) {
    try {
        return checked_pow(p, k + 1, kMaxPeriod);
    } catch (const std::overflow_error&) {
        throw std::overflow_error("p^(K+1) exceeds 2^62 for p=" + std::to_string(p) + ", K=" + std::to_string(k));
    }
}

namespace detail {

inline std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) * b) % m);
}

template <typename PathFn>
PathEnsemble build_ensemble(std::size_t M, std::uint64_t master_seed, std::shared_ptr<const GeneratorMeta> meta,
                            PathFn&& make_values) {
    PathEnsemble ens;
    ens.meta = meta;
    ens.master_seed = master_seed;
    ens.paths.reserve(M);
    for (std::size_t i = 0; i < M; ++i) {
        SamplePath path;
        path.seed = path_seed(master_seed, i);
        path.values = make_values(path.seed);
        path.meta = meta;
        ens.paths.push_back(std::move(path));
    }
    return ens;
}

inline void check_prime_config(std::uint64_t p) {
    if (!is_prime(p)) throw std::invalid_argument("generator: p must be prime, got " + std::to_string(p));
}

inline double geometric_tail(double b, unsigned K) { return std::pow(b, K + 1) / (1.0 - b); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Type I
// ---------------------------------------------------------------------------

inline PathEnsemble gen_type1_iid(const Marginal& marginal, std::size_t N, std::size_t M, std::uint64_t seed) {
    auto meta = std::make_shared<GeneratorMeta>();
    meta->generator = "type1_iid";
    meta->N = N;
    meta->master_seed = seed;
    return detail::build_ensemble(M, seed, meta, [&](std::uint64_t s) {
        std::vector<double> x(N + 1);
        for (std::size_t n = 0; n <= N; ++n) {
            Stream st(stream_key(s, family::kMarginal, 0, n));
            x[n] = marginal.sample(st);
        }
        return x;
    });
}

// ---------------------------------------------------------------------------
// Type II, i.i.d. periodic layers:  X_n = sum_k b^k (Y^k_n - Y^k_0)
// ---------------------------------------------------------------------------

inline std::vector<double> type2_iid_path(const Ex41Config& cfg, unsigned K, std::uint64_t seed) {
    const double b = cfg.b();
    std::vector<double> x(cfg.N + 1, 0.0);
    std::vector<double> y;
    double weight = 1.0;
    for (unsigned k = 0; k <= K; ++k, weight *= b) {
        const std::uint64_t period = layer_period(cfg.p, k);
        // only residues 0..min(period, N+1)-1 are ever looked up
        const std::size_t distinct = static_cast<std::size_t>(std::min<std::uint64_t>(period, cfg.N + 1));
        y.resize(distinct);
        for (std::size_t r = 0; r < distinct; ++r) {
            Stream st(stream_key(seed, family::kY, k, r));
            y[r] = cfg.y_marginal.sample(st);
        }
        for (std::size_t n = 1; n <= cfg.N; ++n) x[n] += weight * (y[n % period] - y[0]);
    }
    return x;
}

inline unsigned resolve_depth(const Ex41Config& cfg) {
    detail::check_prime_config(cfg.p);
    if (!(cfg.H > 0.0)) throw std::invalid_argument("Ex41: H must be positive");
    if (cfg.y_marginal.degenerate()) throw std::invalid_argument("Ex41: Y marginal must be non-degenerate");
    const unsigned K = cfg.depth.value_or(default_depth(cfg.b(), cfg.p));
    layer_period(cfg.p, K);
    return K;
}

inline PathEnsemble gen_type2_iid(const Ex41Config& cfg, std::size_t M, std::uint64_t seed) {
    const unsigned K = resolve_depth(cfg);
    auto meta = std::make_shared<GeneratorMeta>();
    meta->generator = "type2_iid";
    meta->p = cfg.p;
    meta->H = cfg.H;
    meta->b = cfg.b();
    meta->depth = K;
    meta->tail_bound = detail::geometric_tail(meta->b, K);
    meta->N = cfg.N;
    meta->master_seed = seed;
    return detail::build_ensemble(M, seed, meta, [&](std::uint64_t s) { return type2_iid_path(cfg, K, s); });
}

// ---------------------------------------------------------------------------
// Type II, shifted zero-sum patterns
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> realize_shift_vector(const ShiftVector& u, std::uint64_t p, std::uint64_t seed,
                                                std::uint64_t layer) {
    if (!u.random) return u.fixed;
    std::vector<double> v(p);
    double mean = 0.0;
    for (std::uint64_t s = 0; s < p; ++s) {
        Stream st(stream_key(seed, family::kShiftU, layer, s));
        v[s] = u.random->sample(st);
        mean += v[s];
    }
    mean /= static_cast<double>(p);
    for (double& e : v) e -= mean;
    return v;
}

}  // namespace detail

inline unsigned resolve_depth(const Ex42Config& cfg) {
    detail::check_prime_config(cfg.p);
    if (!(cfg.b > 0.0 && cfg.b < 1.0)) throw std::invalid_argument("Ex42: b must lie in (0, 1)");
    if (!cfg.u.random) {
        if (cfg.u.fixed.size() != cfg.p)
            throw std::invalid_argument("Ex42: u must have exactly p entries");
        double sum = 0.0, scale = 0.0;
        for (double e : cfg.u.fixed) {
            sum += e;
            scale = std::max(scale, std::abs(e));
        }
        if (std::abs(sum) > 1e-12 * std::max(1.0, scale)) throw std::invalid_argument("Ex42: entries of u must sum to 0");
    }
    const unsigned K = cfg.depth.value_or(default_depth(cfg.b, cfg.p));
    layer_period(cfg.p, K);
    return K;
}

/// One path of the shifted-pattern construction truncated at depth K.
///
/// Layer k contributes b^k * sum_{m=1}^{J n} V_k(m + U) where J = J_k and
/// U = U_k^{J}; only the selected shift enters the sum. V_k vanishes off
/// multiples of p^k and the pattern sums to zero over a period, so the
/// partial sum depends on J n mod p^{k+1} and touches at most p+1 nonzero
/// terms.
inline std::vector<double> type2_shift_path(const Ex42Config& cfg, unsigned K, std::uint64_t seed) {
    const std::uint64_t p = cfg.p;
    std::vector<double> x(cfg.N + 1, 0.0);
    const std::vector<double> shared = cfg.u.independent_per_layer ? std::vector<double>{}
                                                                   : detail::realize_shift_vector(cfg.u, p, seed, 0);
    double weight = 1.0;
    std::uint64_t stride = 1;  // p^k
    for (unsigned k = 0; k <= K; ++k, weight *= cfg.b, stride *= p) {
        const std::uint64_t period = stride * p;
        const std::uint64_t J = Stream(stream_key(seed, family::kSelector, k, 0)).uniform_index(period);
        if (J == 0) continue;
        const std::uint64_t U = Stream(stream_key(seed, family::kShift, k, J)).uniform_index(period);
        const std::vector<double> layer_u =
            cfg.u.independent_per_layer ? detail::realize_shift_vector(cfg.u, p, seed, k + 1) : std::vector<double>{};
        const std::vector<double>& u = cfg.u.independent_per_layer ? layer_u : shared;

        for (std::size_t n = 1; n <= cfg.N; ++n) {
            const std::uint64_t t = detail::mulmod(J, n, period);
            // sum of V_k(x) for x in [U+1, U+t]
            double partial = 0.0;
            std::uint64_t first = ((U + stride) / stride) * stride;  // smallest multiple of p^k >= U+1
            for (std::uint64_t pos = first; pos <= U + t; pos += stride) partial += u[(pos / stride) % p];
            x[n] += weight * partial;
        }
    }
    return x;
}

inline PathEnsemble gen_type2_shift(const Ex42Config& cfg, std::size_t M, std::uint64_t seed) {
    const unsigned K = resolve_depth(cfg);
    auto meta = std::make_shared<GeneratorMeta>();
    meta->generator = "type2_shift";
    meta->p = cfg.p;
    meta->H = cfg.H();
    meta->b = cfg.b;
    meta->depth = K;
    meta->tail_bound = detail::geometric_tail(cfg.b, K);
    meta->N = cfg.N;
    meta->master_seed = seed;
    return detail::build_ensemble(M, seed, meta, [&](std::uint64_t s) { return type2_shift_path(cfg, K, s); });
}

// ---------------------------------------------------------------------------
// Gaussian generators
// ---------------------------------------------------------------------------

/// Cov(X_n, X_m) = var/2 ((|n|_p)^{2H} + (|m|_p)^{2H} - (|n-m|_p)^{2H}) with
/// |0|_p^{2H} taken as 0, for 0 <= n, m <= N.
inline Eigen::MatrixXd type2_covariance(std::uint64_t p, double H, double var, std::size_t N) {
    std::vector<double> g(N + 1, 0.0);
    for (std::size_t n = 1; n <= N; ++n) g[n] = std::pow(p_adic_norm(n, p).to_double(), 2.0 * H);
    Eigen::MatrixXd C(N + 1, N + 1);
    for (std::size_t i = 0; i <= N; ++i)
        for (std::size_t j = 0; j <= N; ++j)
            C(i, j) = 0.5 * var * (g[i] + g[j] - g[i > j ? i - j : j - i]);
    return C;
}

/// Cov(X_n, X_m) = var/2 (n^{2H} + m^{2H} - |n-m|^{2H}).
inline Eigen::MatrixXd type3_covariance(double H, double var, std::size_t N) {
    std::vector<double> g(N + 1, 0.0);
    for (std::size_t n = 1; n <= N; ++n) g[n] = std::pow(static_cast<double>(n), 2.0 * H);
    Eigen::MatrixXd C(N + 1, N + 1);
    for (std::size_t i = 0; i <= N; ++i)
        for (std::size_t j = 0; j <= N; ++j)
            C(i, j) = 0.5 * var * (g[i] + g[j] - g[i > j ? i - j : j - i]);
    return C;
}

/// Lower Cholesky factor of a covariance matrix, with the jitter ladder
/// 0, 1e-12, 1e-10 (times trace/dim). Anything that needs more jitter is a
/// covariance assembly bug and is reported, not masked.
struct CovarianceFactor {
    Eigen::MatrixXd lower;
    double jitter = 0.0;
};

inline CovarianceFactor factor_covariance(const Eigen::MatrixXd& C) {
    const auto dim = C.rows();
    if (dim == 0) return {Eigen::MatrixXd(0, 0), 0.0};
    const double scale = C.trace() / static_cast<double>(dim);
    for (double rel : {0.0, 1e-12, 1e-10}) {
        Eigen::MatrixXd A = C;
        A.diagonal().array() += rel * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() == Eigen::Success) return {llt.matrixL(), rel * scale};
    }
    throw std::runtime_error("covariance factorization failed after jitter escalation");
}

namespace detail {

/// Paths with X_0 = 0 and (X_1..X_N) ~ N(0, C[1:,1:]).
inline PathEnsemble gaussian_ensemble(const Eigen::MatrixXd& C, std::size_t M, std::uint64_t seed,
                                      std::shared_ptr<const GeneratorMeta> meta) {
    const auto N = static_cast<std::size_t>(C.rows()) - 1;
    const CovarianceFactor f = factor_covariance(C.bottomRightCorner(N, N));
    return build_ensemble(M, seed, meta, [&](std::uint64_t s) {
        Stream st(stream_key(s, family::kGauss, 0, 0));
        Eigen::VectorXd z(N);
        for (std::size_t i = 0; i < N; ++i) z[i] = st.normal();
        const Eigen::VectorXd v = f.lower.triangularView<Eigen::Lower>() * z;
        std::vector<double> x(N + 1, 0.0);
        for (std::size_t i = 0; i < N; ++i) x[i + 1] = v[i];
        return x;
    });
}

}  // namespace detail

inline PathEnsemble gen_type2_gaussian(std::uint64_t p, double H, double var, std::size_t N, std::size_t M,
                                       std::uint64_t seed) {
    detail::check_prime_config(p);
    if (!(H > 0.0)) throw std::invalid_argument("type2 gaussian: H must be positive");
    if (!(var > 0.0)) throw std::invalid_argument("type2 gaussian: var must be positive");
    auto meta = std::make_shared<GeneratorMeta>();
    meta->generator = "type2_gaussian";
    meta->p = p;
    meta->H = H;
    meta->b = std::pow(static_cast<double>(p), -H);
    meta->N = N;
    meta->master_seed = seed;
    return detail::gaussian_ensemble(type2_covariance(p, H, var, N), M, seed, meta);
}

inline PathEnsemble gen_type3_gaussian(double H, double var, std::size_t N, std::size_t M, std::uint64_t seed) {
    if (!(H > 0.0 && H <= 1.0)) throw std::invalid_argument("type3 gaussian: need 0 < H <= 1");
    if (!(var > 0.0)) throw std::invalid_argument("type3 gaussian: var must be positive");
    auto meta = std::make_shared<GeneratorMeta>();
    meta->generator = "type3_gaussian";
    meta->H = H;
    meta->N = N;
    meta->master_seed = seed;
    return detail::gaussian_ensemble(type3_covariance(H, var, N), M, seed, meta);
}

// ---------------------------------------------------------------------------
// Rational-time sampling of the continuous-time extension of a Type-III path
// ---------------------------------------------------------------------------

struct Type3Config {
    double H = 0.5;
    double var = 1.0;
};

/// Draws of (Y(s_1/t_1), ..., Y(s_n/t_n)) realised as
/// (t_1...t_n)^{-H} (X_{s_1 t_2...t_n}, ..., X_{t_1...t_{n-1} s_n}).
/// Each draw samples the integer-time Gaussian path exactly at the needed
/// indices. Rows are draws, columns follow `times`.
inline std::vector<std::vector<double>> rational_time_sample(const Type3Config& base, const std::vector<Rational>& times,
                                                             std::size_t M, std::uint64_t seed) {
    if (!(base.H > 0.0 && base.H <= 1.0)) throw std::invalid_argument("rational_time_sample: need 0 < H <= 1");
    if (times.empty()) throw std::invalid_argument("rational_time_sample: no times");
    std::uint64_t T = 1;
    for (const auto& r : times) {
        if (T > kMaxPeriod / r.den) throw std::overflow_error("rational_time_sample: product of denominators overflows");
        T *= r.den;
    }
    std::vector<std::uint64_t> index;
    for (const auto& r : times) {
        const auto q = T / r.den;
        if (r.num != 0 && q > kMaxPeriod / r.num) throw std::overflow_error("rational_time_sample: index overflows");
        index.push_back(r.num * q);
    }
    std::vector<std::uint64_t> distinct;
    for (auto i : index)
        if (i != 0) distinct.push_back(i);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    const auto d = distinct.size();
    Eigen::MatrixXd C(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double a = static_cast<double>(distinct[i]), b = static_cast<double>(distinct[j]);
            C(i, j) = 0.5 * base.var *
                      (std::pow(a, 2 * base.H) + std::pow(b, 2 * base.H) - std::pow(std::abs(a - b), 2 * base.H));
        }
    const CovarianceFactor f = factor_covariance(C);
    const double scale = std::pow(static_cast<double>(T), -base.H);

    std::vector<std::vector<double>> out;
    out.reserve(M);
    for (std::size_t draw = 0; draw < M; ++draw) {
        Stream st(stream_key(path_seed(seed, draw), family::kGauss, 1, 0));
        Eigen::VectorXd z(d);
        for (std::size_t i = 0; i < d; ++i) z[i] = st.normal();
        const Eigen::VectorXd v = f.lower.triangularView<Eigen::Lower>() * z;
        std::vector<double> row;
        row.reserve(times.size());
        for (auto i : index) {
            if (i == 0) {
                row.push_back(0.0);
                continue;
            }
            const auto pos = std::lower_bound(distinct.begin(), distinct.end(), i) - distinct.begin();
            row.push_back(scale * v[pos]);
        }
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace dtss
