#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtss/generators.hpp"

namespace dtss {

/// Exact joint law of (X_{n_1}, ..., X_{n_k}) as atom -> probability.
/// Atom coordinates are rounded to a 1e-12 grid so that values reached by
/// different latent configurations merge.
struct JointTable {
    std::vector<std::size_t> targets;
    std::map<std::vector<double>, double> probs;
    std::uint64_t configurations = 0;

    /// Law of a single coordinate.
    std::map<double, double> marginal(std::size_t coordinate) const {
        std::map<double, double> out;
        for (const auto& [atom, q] : probs) out[atom.at(coordinate)] += q;
        return out;
    }

    double total() const {
        double t = 0.0;
        for (const auto& [atom, q] : probs) t += q;
        return t;
    }
};

inline constexpr double kExactGrid = 1e-12;
inline constexpr std::uint64_t kMaxExactConfigurations = 10'000'000;

inline double snap_to_grid(double v, double grid = kExactGrid) { return std::round(v / grid) * grid; }

namespace detail {

/// Mixed-radix counter over latent variables with finite supports.
class Odometer {
public:
    explicit Odometer(std::vector<std::size_t> radices) : radices_(std::move(radices)), digits_(radices_.size(), 0) {}

    const std::vector<std::size_t>& digits() const { return digits_; }

    bool advance() {
        for (std::size_t i = 0; i < digits_.size(); ++i) {
            if (++digits_[i] < radices_[i]) return true;
            digits_[i] = 0;
        }
        return false;
    }

private:
    std::vector<std::size_t> radices_;
    std::vector<std::size_t> digits_;
};

inline std::uint64_t count_configurations(const std::vector<std::size_t>& radices) {
    std::uint64_t total = 1;
    for (auto r : radices) {
        if (r == 0) return 0;
        if (total > kMaxExactConfigurations / r)
            throw std::length_error("exact_distribution: state space exceeds " +
                                    std::to_string(kMaxExactConfigurations) + " configurations");
        total *= r;
    }
    return total;
}

inline std::vector<std::pair<double, double>> require_finite(const Marginal& m, const char* what) {
    auto support = m.finite_support();
    if (!support) throw std::invalid_argument(std::string("exact_distribution: ") + what + " must be finitely supported");
    return *support;
}

}  // namespace detail

/// Exhaustive enumeration of every Y^k_n, 0 <= k <= K, 0 <= n < p^{k+1}.
inline JointTable exact_distribution(const Ex41Config& cfg, const std::vector<std::size_t>& targets) {
    if (!cfg.depth) throw std::invalid_argument("exact_distribution: Ex41 config needs an explicit depth K");
    const unsigned K = *cfg.depth;
    const auto atoms = detail::require_finite(cfg.y_marginal, "Y marginal");
    const double b = cfg.b();

    std::vector<std::uint64_t> periods;
    std::size_t n_vars = 0;
    for (unsigned k = 0; k <= K; ++k) {
        periods.push_back(layer_period(cfg.p, k));
        if (periods.back() > kMaxExactConfigurations) throw std::length_error("exact_distribution: state space too large");
        n_vars += periods.back();
    }
    std::vector<std::size_t> radices(n_vars, atoms.size());
    JointTable table;
    table.targets = targets;
    table.configurations = detail::count_configurations(radices);

    detail::Odometer odo(radices);
    std::vector<std::vector<double>> y(K + 1);
    for (unsigned k = 0; k <= K; ++k) y[k].resize(periods[k]);
    do {
        const auto& d = odo.digits();
        double prob = 1.0;
        std::size_t v = 0;
        for (unsigned k = 0; k <= K; ++k)
            for (std::uint64_t n = 0; n < periods[k]; ++n, ++v) {
                y[k][n] = atoms[d[v]].first;
                prob *= atoms[d[v]].second;
            }
        std::vector<double> key;
        key.reserve(targets.size());
        for (auto n : targets) {
            double xn = 0.0;
            for (unsigned k = 0; k <= K; ++k) xn += std::pow(b, k) * (y[k][n % periods[k]] - y[k][0]);
            key.push_back(snap_to_grid(xn));
        }
        table.probs[key] += prob;
    } while (odo.advance());
    return table;
}

/// Exhaustive enumeration over u (when random), the selectors J_k and the
/// shift U_k^{J_k} of the selected stride. Shifts of unselected strides are
/// multiplied by a zero indicator and integrate out.
inline JointTable exact_distribution(const Ex42Config& cfg, const std::vector<std::size_t>& targets) {
    if (!cfg.depth) throw std::invalid_argument("exact_distribution: Ex42 config needs an explicit depth K");
    const unsigned K = *cfg.depth;
    const std::uint64_t p = cfg.p;
    resolve_depth(cfg);

    // latent layout: [u entries...] [J_0, U_0, J_1, U_1, ...]
    std::vector<std::size_t> radices;
    std::vector<std::pair<double, double>> u_atoms;
    std::size_t u_vectors = 0;
    if (cfg.u.random) {
        u_atoms = detail::require_finite(*cfg.u.random, "u marginal");
        u_vectors = cfg.u.independent_per_layer ? K + 1 : 1;
        radices.assign(u_vectors * p, u_atoms.size());
    }
    const std::size_t u_slots = radices.size();
    std::vector<std::uint64_t> periods;
    for (unsigned k = 0; k <= K; ++k) {
        periods.push_back(layer_period(p, k));
        radices.push_back(periods.back());
        radices.push_back(periods.back());
    }
    JointTable table;
    table.targets = targets;
    table.configurations = detail::count_configurations(radices);

    std::vector<std::vector<double>> V(K + 1);
    detail::Odometer odo(radices);
    do {
        const auto& d = odo.digits();
        double prob = 1.0;
        std::vector<std::vector<double>> u;
        if (cfg.u.random) {
            for (std::size_t w = 0; w < u_vectors; ++w) {
                std::vector<double> vec(p);
                double mean = 0.0;
                for (std::uint64_t s = 0; s < p; ++s) {
                    const auto& atom = u_atoms[d[w * p + s]];
                    vec[s] = atom.first;
                    prob *= atom.second;
                    mean += atom.first;
                }
                for (double& e : vec) e -= mean / static_cast<double>(p);
                u.push_back(std::move(vec));
            }
        } else {
            u.push_back(cfg.u.fixed);
        }

        // V_k(n) = u_s if n = s p^k (mod p^{k+1}), 0 if p^k does not divide n
        for (unsigned k = 0; k <= K; ++k) {
            const auto& uk = u[cfg.u.independent_per_layer ? k : 0];
            const std::uint64_t P = periods[k], stride = P / p;
            V[k].assign(P, 0.0);
            for (std::uint64_t n = 0; n < P; ++n)
                if (n % stride == 0) V[k][n] = uk[(n / stride) % p];
        }

        std::vector<double> key;
        key.reserve(targets.size());
        for (auto n : targets) {
            double xn = 0.0;
            for (unsigned k = 0; k <= K; ++k) {
                const std::uint64_t P = periods[k];
                const std::uint64_t J = d[u_slots + 2 * k];
                const std::uint64_t U = d[u_slots + 2 * k + 1];
                if (J == 0) continue;
                // sum_{l=1}^{n} Y_{k,J}(l), Y_{k,J}(l) = sum_{m=J(l-1)+1}^{J l} V_k(m + U)
                double layer = 0.0;
                for (std::size_t l = 1; l <= n; ++l)
                    for (std::uint64_t m = J * (l - 1) + 1; m <= J * l; ++m) layer += V[k][(m + U) % P];
                xn += std::pow(cfg.b, k) * layer;
            }
            key.push_back(snap_to_grid(xn));
        }
        for (unsigned k = 0; k <= K; ++k) prob *= 1.0 / static_cast<double>(periods[k] * periods[k]);
        table.probs[key] += prob;
    } while (odo.advance());
    return table;
}

}  // namespace dtss
