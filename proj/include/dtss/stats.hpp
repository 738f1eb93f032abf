#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dtss/generators.hpp"
#include "dtss/padic.hpp"

namespace dtss {

inline constexpr double kDefaultAlpha = 0.01;

struct TestReport {
    double statistic = 0.0;
    double p_value = 1.0;
    double alpha = kDefaultAlpha;
    bool reject = false;
    std::size_t n = 0;
    std::size_t m = 0;

    bool accepted() const { return !reject; }
};

namespace detail {

/// Q_KS(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2).
inline double kolmogorov_q(double lambda) {
    if (lambda < 0.2) return 1.0;
    double sum = 0.0, sign = 1.0, prev = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
        sum += term;
        if (std::abs(term) <= 1e-12 * std::abs(sum) || std::abs(term) <= 1e-300) return std::clamp(2.0 * sum, 0.0, 1.0);
        sign = -sign;
        prev = term;
    }
    (void)prev;
    return 1.0;
}

/// P(D >= d) for the two-sided two-sample statistic of continuous data,
/// by the lattice-path recursion over the (n, m) grid.
inline double ks_exact_pvalue(double d, std::size_t n, std::size_t m) {
    if (n > m) std::swap(n, m);
    const double md = static_cast<double>(n), nd = static_cast<double>(m);
    const double q = (0.5 + std::floor(d * md * nd - 1e-7)) / (md * nd);
    std::vector<double> u(m + 1);
    for (std::size_t j = 0; j <= m; ++j) u[j] = (static_cast<double>(j) / nd > q) ? 0.0 : 1.0;
    for (std::size_t i = 1; i <= n; ++i) {
        const double w = static_cast<double>(i) / static_cast<double>(i + m);
        if (static_cast<double>(i) / md > q)
            u[0] = 0.0;
        else
            u[0] = w * u[0];
        for (std::size_t j = 1; j <= m; ++j) {
            if (std::abs(static_cast<double>(i) / md - static_cast<double>(j) / nd) > q)
                u[j] = 0.0;
            else
                u[j] = w * u[j] + u[j - 1];
        }
    }
    return std::clamp(1.0 - u[m], 0.0, 1.0);
}

}  // namespace detail

/// Two-sample Kolmogorov-Smirnov test. Ties are handled by stepping both
/// empirical CDFs past each distinct value together. The p-value is exact
/// when n*m <= 10^4 and asymptotic otherwise.
inline TestReport ks_two_sample(std::span<const double> x, std::span<const double> y, double alpha = kDefaultAlpha) {
    if (x.empty() || y.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
    std::vector<double> a(x.begin(), x.end()), b(y.begin(), y.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const auto n = a.size(), m = b.size();
    std::size_t i = 0, j = 0;
    double D = 0.0;
    while (i < n && j < m) {
        const double v = std::min(a[i], b[j]);
        while (i < n && a[i] == v) ++i;
        while (j < m && b[j] == v) ++j;
        D = std::max(D, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
    }
    TestReport rep;
    rep.statistic = D;
    rep.n = n;
    rep.m = m;
    rep.alpha = alpha;
    if (D == 0.0) {
        rep.p_value = 1.0;
    } else if (static_cast<double>(n) * static_cast<double>(m) <= 1e4) {
        rep.p_value = detail::ks_exact_pvalue(D, n, m);
    } else {
        const double en = std::sqrt(static_cast<double>(n) * m / static_cast<double>(n + m));
        rep.p_value = detail::kolmogorov_q((en + 0.12 + 0.11 / en) * D);
    }
    rep.reject = rep.p_value < alpha;
    return rep;
}

/// Report for two samples that are the same random variable by
/// construction (statistic 0).
inline TestReport identical_samples_report(std::size_t n, double alpha) {
    TestReport rep;
    rep.n = rep.m = n;
    rep.alpha = alpha;
    return rep;
}

/// Holm step-down: which hypotheses are rejected at family-wise level alpha.
inline std::vector<bool> holm_reject(const std::vector<double>& p_values, double alpha) {
    std::vector<std::size_t> order(p_values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) { return p_values[l] < p_values[r]; });
    std::vector<bool> out(p_values.size(), false);
    const auto k = p_values.size();
    for (std::size_t rank = 0; rank < k; ++rank) {
        if (p_values[order[rank]] > alpha / static_cast<double>(k - rank)) break;
        out[order[rank]] = true;
    }
    return out;
}

/// Rounds every value onto a grid of 1e-9 times the largest magnitude, so
/// atoms computed along different floating-point routes coincide.
inline std::vector<double> snap_sample(std::vector<double> v, double rel = 1e-9) {
    double scale = 0.0;
    for (double e : v) scale = std::max(scale, std::abs(e));
    if (scale == 0.0 || !std::isfinite(scale)) return v;
    const double grid = rel * scale;
    for (double& e : v) e = std::round(e / grid) * grid;
    return v;
}

/// KS between f(path) on the first half of the paths and g(path) on the
/// second half. Using disjoint halves keeps the two samples independent
/// when f and g read the same path.
inline TestReport split_half_ks(std::size_t count, const std::function<double(std::size_t)>& f,
                                const std::function<double(std::size_t)>& g, double alpha) {
    if (count < 2) throw std::invalid_argument("split_half_ks: need at least two draws");
    const std::size_t half = count / 2;
    std::vector<double> a, b;
    a.reserve(half);
    b.reserve(count - half);
    for (std::size_t i = 0; i < half; ++i) a.push_back(f(i));
    for (std::size_t i = half; i < count; ++i) b.push_back(g(i));
    std::vector<double> joined(a);
    joined.insert(joined.end(), b.begin(), b.end());
    joined = snap_sample(std::move(joined));
    return ks_two_sample(std::span<const double>(joined.data(), half),
                         std::span<const double>(joined.data() + half, count - half), alpha);
}

/// A named check with its Holm-corrected decision.
struct NamedReport {
    std::string name;
    TestReport report;
    bool holm_reject = false;
};

struct SuiteResult {
    std::vector<NamedReport> checks;
    double alpha = kDefaultAlpha;
    bool pass = true;
};

inline SuiteResult holm_suite(std::vector<NamedReport> checks, double alpha) {
    std::vector<double> p;
    for (const auto& c : checks) p.push_back(c.report.p_value);
    const auto rej = holm_reject(p, alpha);
    SuiteResult out;
    out.alpha = alpha;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        checks[i].holm_reject = rej[i];
        out.pass = out.pass && !rej[i];
    }
    out.checks = std::move(checks);
    return out;
}

// ---------------------------------------------------------------------------
// Ensemble-level checks
// ---------------------------------------------------------------------------

/// KS of X_{factor n} against b(factor) X_n, one value per path.
inline TestReport test_marginal_scaling(const PathEnsemble& ens, const ScalingFunction& sf, std::size_t n,
                                        std::uint64_t factor, double alpha = kDefaultAlpha) {
    if (factor == 0) throw std::invalid_argument("test_marginal_scaling: factor must be positive");
    if (n * factor > ens.N()) throw std::out_of_range("test_marginal_scaling: index beyond path length");
    if (factor == 1) return identical_samples_report(ens.size(), alpha);
    const double scale = scaling_eval(sf, factor);
    return split_half_ks(
        ens.size(), [&](std::size_t i) { return ens.paths[i].values[n * factor]; },
        [&](std::size_t i) { return scale * ens.paths[i].values[n]; }, alpha);
}

/// KS of X_{m+1} - X_m against X_{m+k tau+1} - X_{m+k tau}.
inline TestReport test_stationary_increments(const PathEnsemble& ens, std::size_t m, std::size_t k, std::size_t tau,
                                             double alpha = kDefaultAlpha) {
    if (tau == 0) throw std::invalid_argument("test_stationary_increments: tau must be positive");
    const std::size_t shifted = m + k * tau;
    if (shifted + 1 > ens.N()) throw std::out_of_range("test_stationary_increments: index beyond path length");
    if (k == 0) return identical_samples_report(ens.size(), alpha);
    return split_half_ks(
        ens.size(), [&](std::size_t i) { return ens.paths[i].values[m + 1] - ens.paths[i].values[m]; },
        [&](std::size_t i) { return ens.paths[i].values[shifted + 1] - ens.paths[i].values[shifted]; }, alpha);
}

struct Estimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

/// Sample covariance of X_n and X_m across paths with a jackknife standard
/// error (leave-one-path-out).
inline Estimate empirical_covariance(const PathEnsemble& ens, std::size_t n, std::size_t m) {
    const std::size_t M = ens.size();
    if (M < 2) throw std::invalid_argument("empirical_covariance: need at least two paths");
    if (n > ens.N() || m > ens.N()) throw std::out_of_range("empirical_covariance: index beyond path length");
    const auto x = ens.column(n), y = ens.column(m);
    // centre first for numerical stability
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / M;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / M;
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        sx += x[i] - mx;
        sy += y[i] - my;
        sxy += (x[i] - mx) * (y[i] - my);
    }
    Estimate out;
    out.value = (sxy - sx * sy / M) / static_cast<double>(M - 1);
    if (M < 3) {
        out.stderr_ = std::numeric_limits<double>::infinity();
        return out;
    }
    std::vector<double> loo(M);
    double mean_loo = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        const double xi = x[i] - mx, yi = y[i] - my;
        const double s_x = sx - xi, s_y = sy - yi, s_xy = sxy - xi * yi;
        loo[i] = (s_xy - s_x * s_y / (M - 1)) / static_cast<double>(M - 2);
        mean_loo += loo[i];
    }
    mean_loo /= M;
    double ss = 0.0;
    for (double v : loo) ss += (v - mean_loo) * (v - mean_loo);
    out.stderr_ = std::sqrt(ss * static_cast<double>(M - 1) / M);
    return out;
}

/// a = sup{x >= 0 : P(|X_1| < x) = 0}, b = inf{x > 0 : P(|X_1| > x) = 0}.
struct SupportEstimate {
    double a_hat = 0.0;
    double b_hat = 0.0;
    bool exact = false;
};

struct SupportGapResult {
    SupportEstimate estimate;
    bool holds = false;
    double required_ratio = 1.0;  // 1 + 2 p^{-H}
};

namespace detail {
inline SupportGapResult support_gap_from(double a, double b, bool exact, std::uint64_t p, double H) {
    SupportGapResult r;
    r.estimate = {a, b, exact};
    r.required_ratio = 1.0 + 2.0 * std::pow(static_cast<double>(p), -H);
    r.holds = b >= r.required_ratio * a - 1e-12;
    return r;
}
}  // namespace detail

/// Exact mode: `law` maps atoms of X_1 to their probabilities.
inline SupportGapResult support_gap_check(const std::map<double, double>& law, std::uint64_t p, double H) {
    double a = std::numeric_limits<double>::infinity(), b = 0.0;
    bool any = false;
    for (const auto& [x, q] : law) {
        if (!(q > 0.0)) continue;
        any = true;
        a = std::min(a, std::abs(x));
        b = std::max(b, std::abs(x));
    }
    if (!any) throw std::invalid_argument("support_gap_check: empty support");
    return detail::support_gap_from(a, b, true, p, H);
}

/// Monte Carlo mode: extremes of |X_1| over paths. Not a certificate:
/// sample extremes undershoot the essential supremum and overshoot the
/// essential infimum.
inline SupportGapResult support_gap_check(const PathEnsemble& ens, std::uint64_t p, double H) {
    if (ens.size() == 0 || ens.N() < 1) throw std::invalid_argument("support_gap_check: empty support");
    double a = std::numeric_limits<double>::infinity(), b = 0.0;
    for (const auto& path : ens.paths) {
        a = std::min(a, std::abs(path.values[1]));
        b = std::max(b, std::abs(path.values[1]));
    }
    return detail::support_gap_from(a, b, false, p, H);
}

inline constexpr std::size_t kMinEnsembleForTests = 100;

/// KS between X_1 (first half of the paths) and -X_1 (second half).
inline TestReport symmetry_check(const PathEnsemble& ens, double alpha = kDefaultAlpha) {
    if (ens.size() < kMinEnsembleForTests) throw std::invalid_argument("symmetry_check: need at least 100 paths");
    if (ens.N() < 1) throw std::out_of_range("symmetry_check: paths too short");
    return split_half_ks(
        ens.size(), [&](std::size_t i) { return ens.paths[i].values[1]; },
        [&](std::size_t i) { return -ens.paths[i].values[1]; }, alpha);
}

/// Exact mode: sup-distance between the law of X_1 and that of -X_1.
inline TestReport symmetry_check(const std::map<double, double>& law, double alpha = kDefaultAlpha) {
    if (law.empty()) throw std::invalid_argument("symmetry_check: empty law");
    std::map<double, double> neg;
    for (const auto& [x, q] : law) neg[x == 0.0 ? 0.0 : -x] += q;
    std::vector<double> grid;
    for (const auto& [x, q] : law) grid.push_back(x);
    for (const auto& [x, q] : neg) grid.push_back(x);
    std::sort(grid.begin(), grid.end());
    double D = 0.0, fa = 0.0, fb = 0.0;
    auto ia = law.begin();
    auto ib = neg.begin();
    for (double g : grid) {
        while (ia != law.end() && ia->first <= g) fa += (ia++)->second;
        while (ib != neg.end() && ib->first <= g) fb += (ib++)->second;
        D = std::max(D, std::abs(fa - fb));
    }
    TestReport rep;
    rep.alpha = alpha;
    rep.statistic = D < 1e-12 ? 0.0 : D;
    rep.p_value = rep.statistic == 0.0 ? 1.0 : 0.0;
    rep.reject = rep.statistic > 0.0;
    return rep;
}

}  // namespace dtss
