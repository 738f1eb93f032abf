#pragma once

#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dtss/rng.hpp"

namespace dtss {

/// A one-dimensional marginal law used to drive the generators.
///
/// Named families: normal(mu, sigma), uniform(a, b), rademacher,
/// point(c), cauchy(loc, scale). `finite` is an explicit list of atoms
/// with probabilities; it is the only family the exact oracle accepts
/// besides point and rademacher.
class Marginal {
public:
    enum class Family { Finite, Normal, Uniform, Rademacher, Point, Cauchy };

    static Marginal finite(std::vector<double> values, std::vector<double> probs) {
        if (values.empty() || values.size() != probs.size())
            throw std::invalid_argument("finite marginal: values and probs must be nonempty and equally long");
        double total = 0.0;
        for (double q : probs) {
            if (!(q >= 0.0) || !std::isfinite(q)) throw std::invalid_argument("finite marginal: negative probability");
            total += q;
        }
        if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("finite marginal: probabilities must sum to 1");
        for (double v : values)
            if (!std::isfinite(v)) throw std::invalid_argument("finite marginal: non-finite atom");
        Marginal m(Family::Finite, {});
        m.values_ = std::move(values);
        m.probs_ = std::move(probs);
        m.cumulative_.resize(m.probs_.size());
        std::partial_sum(m.probs_.begin(), m.probs_.end(), m.cumulative_.begin());
        return m;
    }
    /// Uniform on a finite set of atoms.
    static Marginal uniform_on(std::vector<double> values) {
        std::vector<double> probs(values.size(), values.empty() ? 0.0 : 1.0 / static_cast<double>(values.size()));
        return finite(std::move(values), std::move(probs));
    }
    static Marginal normal(double mu = 0.0, double sigma = 1.0) {
        if (!(sigma > 0.0)) throw std::invalid_argument("normal marginal: sigma must be positive");
        return Marginal(Family::Normal, {mu, sigma});
    }
    static Marginal uniform(double a = 0.0, double b = 1.0) {
        if (!(a < b)) throw std::invalid_argument("uniform marginal: need a < b");
        return Marginal(Family::Uniform, {a, b});
    }
    static Marginal rademacher() { return Marginal(Family::Rademacher, {}); }
    static Marginal point(double c) { return Marginal(Family::Point, {c}); }
    static Marginal cauchy(double loc = 0.0, double scale = 1.0) {
        if (!(scale > 0.0)) throw std::invalid_argument("cauchy marginal: scale must be positive");
        return Marginal(Family::Cauchy, {loc, scale});
    }

    Family family() const { return family_; }
    const std::vector<double>& params() const { return params_; }

    double sample(Stream& s) const {
        switch (family_) {
            case Family::Finite: {
                const double u = s.uniform();
                for (std::size_t i = 0; i + 1 < cumulative_.size(); ++i)
                    if (u < cumulative_[i]) return values_[i];
                return values_.back();
            }
            case Family::Normal: return params_[0] + params_[1] * s.normal();
            case Family::Uniform: return params_[0] + (params_[1] - params_[0]) * s.uniform();
            case Family::Rademacher: return (s.next() >> 63) ? 1.0 : -1.0;
            case Family::Point: return params_[0];
            case Family::Cauchy:
                return params_[0] + params_[1] * std::tan(std::numbers::pi * (s.uniform() - 0.5));
        }
        return 0.0;
    }

    /// Atoms with their probabilities, when the law is finitely supported.
    std::optional<std::vector<std::pair<double, double>>> finite_support() const {
        std::vector<std::pair<double, double>> out;
        switch (family_) {
            case Family::Finite:
                for (std::size_t i = 0; i < values_.size(); ++i)
                    if (probs_[i] > 0.0) out.emplace_back(values_[i], probs_[i]);
                return out;
            case Family::Rademacher: return std::vector<std::pair<double, double>>{{-1.0, 0.5}, {1.0, 0.5}};
            case Family::Point: return std::vector<std::pair<double, double>>{{params_[0], 1.0}};
            default: return std::nullopt;
        }
    }

    const std::vector<double>& atoms() const { return values_; }
    const std::vector<double>& probabilities() const { return probs_; }

    /// Degenerate laws cannot drive the Type-II constructions.
    bool degenerate() const {
        if (family_ == Family::Point) return true;
        if (family_ == Family::Finite) {
            std::size_t positive = 0;
            for (double q : probs_) positive += q > 0.0;
            return positive < 2;
        }
        return false;
    }

    std::string name() const {
        switch (family_) {
            case Family::Finite: return "finite";
            case Family::Normal: return "normal";
            case Family::Uniform: return "uniform";
            case Family::Rademacher: return "rademacher";
            case Family::Point: return "point";
            case Family::Cauchy: return "cauchy";
        }
        return "?";
    }

private:
    Marginal(Family f, std::vector<double> params) : family_(f), params_(std::move(params)) {}

    Family family_;
    std::vector<double> params_;
    std::vector<double> values_, probs_, cumulative_;
};

}  // namespace dtss
