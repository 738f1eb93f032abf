#pragma once

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dtss/padic.hpp"

namespace dtss {

/// Left-continuous quantile function Q(t) = inf{x : G(x) >= t} on (0, 1),
/// either of a named family or of an empirical sample.
class QuantileModel {
public:
    enum class Family { Uniform, Rademacher, Normal, Point };

    static QuantileModel uniform(double a = 0.0, double b = 1.0) {
        if (!(a < b)) throw std::invalid_argument("uniform quantile model: need a < b");
        return QuantileModel(Family::Uniform, {a, b});
    }
    static QuantileModel rademacher() { return QuantileModel(Family::Rademacher, {}); }
    static QuantileModel normal(double mu = 0.0, double sigma = 1.0) {
        if (!(sigma > 0.0)) throw std::invalid_argument("normal quantile model: sigma must be positive");
        return QuantileModel(Family::Normal, {mu, sigma});
    }
    static QuantileModel point(double c) { return QuantileModel(Family::Point, {c}); }

    /// Empirical law of a sample; sorts a copy.
    static QuantileModel empirical(std::vector<double> sample) {
        if (sample.empty()) throw std::invalid_argument("empirical quantile model: empty sample");
        for (double v : sample)
            if (!std::isfinite(v)) throw std::invalid_argument("empirical quantile model: non-finite value");
        std::sort(sample.begin(), sample.end());
        QuantileModel m(Family::Point, {});
        m.sorted_ = std::move(sample);
        return m;
    }

    bool is_empirical() const { return !sorted_.empty(); }
    Family family() const { return family_; }
    const std::vector<double>& params() const { return params_; }
    const std::vector<double>& sorted_sample() const { return sorted_; }

    /// Law of -X.
    QuantileModel negated() const {
        if (is_empirical()) {
            std::vector<double> s(sorted_.rbegin(), sorted_.rend());
            for (double& v : s) v = -v;
            QuantileModel m(Family::Point, {});
            m.sorted_ = std::move(s);
            return m;
        }
        switch (family_) {
            case Family::Uniform: return uniform(-params_[1], -params_[0]);
            case Family::Rademacher: return rademacher();
            case Family::Normal: return normal(-params_[0], params_[1]);
            case Family::Point: return point(-params_[0]);
        }
        return *this;
    }

    double operator()(double t) const {
        if (!(t > 0.0 && t < 1.0)) throw std::domain_error("quantile level must lie in (0, 1)");
        if (is_empirical()) return sorted_[order_index(t)];
        switch (family_) {
            case Family::Uniform: return params_[0] + (params_[1] - params_[0]) * t;
            case Family::Rademacher: return t <= 0.5 ? -1.0 : 1.0;
            case Family::Normal:
                return boost::math::quantile(boost::math::normal_distribution<double>(params_[0], params_[1]), t);
            case Family::Point: return params_[0];
        }
        return 0.0;
    }

    /// 0-based index of x_(ceil(n t)). Levels within 1e-9 of a multiple
    /// of 1/n are treated as exact multiples.
    std::size_t order_index(double t) const {
        const auto n = static_cast<double>(sorted_.size());
        const double nt = n * t;
        const double r = std::round(nt);
        double k = std::abs(nt - r) <= 1e-9 * std::max(1.0, nt) ? r : std::ceil(nt);
        k = std::clamp(k, 1.0, n);
        return static_cast<std::size_t>(k) - 1;
    }

private:
    QuantileModel(Family f, std::vector<double> params) : family_(f), params_(std::move(params)) {}

    Family family_;
    std::vector<double> params_;
    std::vector<double> sorted_;
};

inline double quantile(const QuantileModel& model, double t) { return model(t); }

namespace detail {

/// Adaptive midpoint refinement with Richardson correction. Each panel
/// carries its one- and two-point midpoint sums; R = (4 fine - coarse) / 3
/// removes the leading h^2 error term. A panel is accepted when R agrees
/// with the sum of its two halves' R values to the panel's share of `tol`.
/// All evaluations are at midpoints, which never touch panel endpoints, so
/// atoms of the law sitting on a panel boundary are not sampled.
inline double adaptive_midpoint(const std::function<double(double)>& f, double a, double b, double tol,
                                std::size_t& budget) {
    // one-point midpoint sums of the two halves of [lo, hi]
    struct Halves {
        double left, right;
        double sum() const { return left + right; }
    };
    struct Panel {
        double lo, hi, coarse;
        Halves fine;
        int depth;
    };
    auto halves = [&f, &budget](double lo, double hi) {
        if (budget < 2) throw std::runtime_error("average_quantile: quadrature evaluation budget exhausted");
        budget -= 2;
        const double h = hi - lo;
        return Halves{0.5 * h * f(lo + 0.25 * h), 0.5 * h * f(lo + 0.75 * h)};
    };
    auto richardson = [](double coarse, double fine) { return (4.0 * fine - coarse) / 3.0; };
    if (budget < 1) throw std::runtime_error("average_quantile: quadrature evaluation budget exhausted");
    --budget;
    const double total = b - a;
    std::vector<Panel> stack{{a, b, total * f(0.5 * (a + b)), halves(a, b), 0}};
    double sum = 0.0;
    while (!stack.empty()) {
        const Panel pn = stack.back();
        stack.pop_back();
        const double mid = 0.5 * (pn.lo + pn.hi), h = pn.hi - pn.lo;
        const Halves lf = halves(pn.lo, mid), rf = halves(mid, pn.hi);
        const double parent = richardson(pn.coarse, pn.fine.sum());
        const double split = richardson(pn.fine.left, lf.sum()) + richardson(pn.fine.right, rf.sum());
        const bool settled = pn.depth >= 2 && std::abs(split - parent) <= tol * h / total;
        if (settled || pn.depth >= 60) {
            sum += split;
        } else {
            stack.push_back({pn.lo, mid, pn.fine.left, lf, pn.depth + 1});
            stack.push_back({mid, pn.hi, pn.fine.right, rf, pn.depth + 1});
        }
    }
    return sum;
}

}  // namespace detail

inline constexpr double kQuadratureTol = 1e-10;
inline constexpr std::size_t kQuadratureBudget = std::size_t{1} << 20;

/// Average quantile functional (1/(d-c)) * int_c^d Q(t) dt.
/// Empirical models are integrated exactly as a weighted sum of order
/// statistics.
inline double average_quantile(const QuantileModel& model, double c, double d) {
    if (!(c > 0.0 && d < 1.0)) throw std::domain_error("average_quantile: window must lie in (0, 1)");
    if (!(c < d)) throw std::invalid_argument("average_quantile: need c < d");
    if (model.is_empirical()) {
        const auto& x = model.sorted_sample();
        const auto n = static_cast<double>(x.size());
        // Q = x_(k) on ((k-1)/n, k/n]
        double acc = 0.0;
        const std::size_t first = model.order_index(c), last = model.order_index(d);
        for (std::size_t i = first; i <= last; ++i) {
            const double lo = std::max(c, static_cast<double>(i) / n);
            const double hi = std::min(d, static_cast<double>(i + 1) / n);
            if (hi > lo) acc += (hi - lo) * x[i];
        }
        return acc / (d - c);
    }
    std::size_t budget = kQuadratureBudget;
    const double integral = detail::adaptive_midpoint([&](double t) { return model(t); }, c, d, kQuadratureTol, budget);
    return integral / (d - c);
}

// ---------------------------------------------------------------------------
// Non-mixability certificates
// ---------------------------------------------------------------------------

enum class TailSide { PositiveTail, NegativeTail };

/// Constants (k2, k3) such that a1 > k2 a2 + k3 a3 rules out Y_i with
/// Y_i / a_i ~ G_i summing to zero.
struct FeasibilityReport {
    double k2 = 0.0;
    double k3 = 0.0;
    std::array<double, 3> beta{};
    double s = 0.0;
    TailSide side = TailSide::PositiveTail;
    std::array<std::pair<double, double>, 3> windows{};
    std::array<double, 3> window_means{};

    bool certifies(double a1, double a2, double a3) const { return a1 > k2 * a2 + k3 * a3; }
};

inline constexpr int kLevelGrid = 1024;

namespace detail {

inline std::optional<double> smallest_positive_level(const QuantileModel& g) {
    for (int j = 1; j < kLevelGrid; ++j) {
        const double s = static_cast<double>(j) / kLevelGrid;
        if (g(s) > 0.0) return s;
    }
    return std::nullopt;
}

inline std::optional<double> largest_negative_level(const QuantileModel& g) {
    for (int j = kLevelGrid - 1; j >= 1; --j) {
        const double s = static_cast<double>(j) / kLevelGrid;
        if (g(s) < 0.0) return s;
    }
    return std::nullopt;
}

}  // namespace detail

/// Constants from the average-quantile necessary condition for joint
/// mixability. With no `beta`, s is the smallest level on a 1/1024 grid with
/// Q_1(s) > 0 and beta = (s, (1-s)/4, (1-s)/4); if Q_1 is never positive the
/// negative tail is used with the largest s having Q_1(s) < 0 and
/// beta = (1-s, s/4, s/4).
inline FeasibilityReport feasibility_constants(const QuantileModel& g1, const QuantileModel& g2,
                                               const QuantileModel& g3,
                                               std::optional<std::array<double, 3>> beta = std::nullopt) {
    FeasibilityReport rep;
    if (beta) {
        for (double v : *beta)
            if (!(v > 0.0)) throw std::invalid_argument("feasibility_constants: beta entries must be positive");
        if (!((*beta)[0] + (*beta)[1] + (*beta)[2] < 1.0))
            throw std::invalid_argument("feasibility_constants: beta must sum to less than 1");
        rep.beta = *beta;
        if (g1(rep.beta[0]) > 0.0) {
            rep.side = TailSide::PositiveTail;
            rep.s = rep.beta[0];
        } else if (g1(1.0 - rep.beta[0]) < 0.0) {
            rep.side = TailSide::NegativeTail;
            rep.s = 1.0 - rep.beta[0];
        } else {
            throw std::invalid_argument("feasibility_constants: Q_1 has no definite sign at the beta_1 anchor");
        }
    } else if (auto s = detail::smallest_positive_level(g1)) {
        rep.side = TailSide::PositiveTail;
        rep.s = *s;
        rep.beta = {*s, (1.0 - *s) / 4.0, (1.0 - *s) / 4.0};
    } else if (auto s = detail::largest_negative_level(g1)) {
        rep.side = TailSide::NegativeTail;
        rep.s = *s;
        rep.beta = {1.0 - *s, *s / 4.0, *s / 4.0};
    } else {
        throw std::invalid_argument("feasibility_constants: G1 is concentrated at 0");
    }

    const double B = rep.beta[0] + rep.beta[1] + rep.beta[2];
    const std::array<const QuantileModel*, 3> g{&g1, &g2, &g3};
    for (int i = 0; i < 3; ++i) {
        if (rep.side == TailSide::PositiveTail)
            rep.windows[i] = {rep.beta[i], rep.beta[i] + 1.0 - B};
        else
            rep.windows[i] = {B - rep.beta[i], 1.0 - rep.beta[i]};
        rep.window_means[i] = average_quantile(*g[i], rep.windows[i].first, rep.windows[i].second);
    }
    const double anchor = rep.window_means[0];
    if (rep.side == TailSide::PositiveTail ? !(anchor > 0.0) : !(anchor < 0.0))
        throw std::invalid_argument("feasibility_constants: anchor window mean has the wrong sign");
    rep.k2 = -rep.window_means[1] / anchor;
    rep.k3 = -rep.window_means[2] / anchor;
    return rep;
}

/// Symmetric-pair variant: G2 is the reflection of G1, and any k2 > 1 can
/// be met. Searches s on the 1/1024 grid and eps = min(s, 1-s) / 2^j for
/// Qbar_1([s-eps, s]) > Qbar_1([s, s+eps]) / k2 > 0, then
/// k3 = -Qbar_3([eps, 2 eps]) / Qbar_1([s-eps, s]).
inline FeasibilityReport symmetric_pair_constants(const QuantileModel& g1, const QuantileModel& g3, double k2) {
    if (!(k2 > 1.0)) throw std::invalid_argument("symmetric_pair_constants: need k2 > 1");
    const bool positive = detail::smallest_positive_level(g1).has_value();
    if (!positive && !detail::largest_negative_level(g1))
        throw std::invalid_argument("symmetric_pair_constants: G1 is concentrated at 0");
    // the negative-tail case is the positive one for (-Y_1, -Y_2, -Y_3)
    const QuantileModel q1 = positive ? g1 : g1.negated();
    const QuantileModel q3 = positive ? g3 : g3.negated();

    for (int j = 1; j < kLevelGrid; ++j) {
        const double s = static_cast<double>(j) / kLevelGrid;
        if (!(q1(s) > 0.0)) continue;
        double eps = std::min(s, 1.0 - s) / 2.0;
        for (int halving = 0; halving < 30; ++halving, eps /= 2.0) {
            if (!(2.0 * eps < 1.0)) continue;
            const double before = average_quantile(q1, s - eps, s);
            const double after = average_quantile(q1, s, s + eps);
            if (after / k2 > 0.0 && before > after / k2) {
                FeasibilityReport rep;
                rep.side = positive ? TailSide::PositiveTail : TailSide::NegativeTail;
                rep.s = s;
                rep.beta = {s - eps, 1.0 - s - eps, eps};
                rep.windows = {std::pair{s - eps, s}, std::pair{s, s + eps}, std::pair{eps, 2.0 * eps}};
                rep.window_means = {before, after, average_quantile(q3, eps, 2.0 * eps)};
                rep.k2 = k2;
                rep.k3 = -rep.window_means[2] / before;
                return rep;
            }
        }
    }
    throw std::runtime_error("symmetric_pair_constants: no continuity level found on the search grid");
}

// ---------------------------------------------------------------------------
// Finite-range probes of the growth corollaries
// ---------------------------------------------------------------------------

/// max over 1 <= n <= n_max of b(n+m) - k b(n). The n = 0 boundary, which
/// would need b(0), is reported separately as b(m).
struct GrowthDiagnostic {
    double c_m = -std::numeric_limits<double>::infinity();
    std::uint64_t argmax_n = 0;
    double boundary_b_m = 0.0;
    std::uint64_t n_max = 0;
};

inline GrowthDiagnostic growth_bound_diagnostic(const ScalingFunction& sf, double k, std::uint64_t m,
                                                std::uint64_t n_max) {
    if (!sf.conforming()) throw std::invalid_argument("growth_bound_diagnostic: non-conforming scaling function");
    if (!(k > 1.0)) throw std::invalid_argument("growth_bound_diagnostic: need k > 1");
    if (m == 0 || n_max == 0) throw std::invalid_argument("growth_bound_diagnostic: need m >= 1 and n_max >= 1");
    GrowthDiagnostic out;
    out.n_max = n_max;
    out.boundary_b_m = scaling_eval(sf, m);
    for (std::uint64_t n = 1; n <= n_max; ++n) {
        const double v = scaling_eval(sf, n + m) - k * scaling_eval(sf, n);
        if (v > out.c_m) {
            out.c_m = v;
            out.argmax_n = n;
        }
    }
    return out;
}

/// min over 1 <= n <= n_max of max(b(n tau), b(n tau + m)).
struct MinBoundDiagnostic {
    double d_m = std::numeric_limits<double>::infinity();
    std::uint64_t argmin_n = 0;
    std::uint64_t n_max = 0;
};

inline MinBoundDiagnostic min_bound_diagnostic(const ScalingFunction& sf, std::uint64_t m, std::uint64_t tau,
                                               std::uint64_t n_max) {
    if (!sf.conforming()) throw std::invalid_argument("min_bound_diagnostic: non-conforming scaling function");
    if (m == 0 || tau == 0 || n_max == 0)
        throw std::invalid_argument("min_bound_diagnostic: need m, tau, n_max >= 1");
    MinBoundDiagnostic out;
    out.n_max = n_max;
    for (std::uint64_t n = 1; n <= n_max; ++n) {
        const double v = std::max(scaling_eval(sf, n * tau), scaling_eval(sf, n * tau + m));
        if (v < out.d_m) {
            out.d_m = v;
            out.argmin_n = n;
        }
    }
    return out;
}

}  // namespace dtss
