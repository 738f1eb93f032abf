#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "dtss/mixability.hpp"
#include "dtss/rng.hpp"

using namespace dtss;

TEST(Quantile, Examples) {
    EXPECT_DOUBLE_EQ(quantile(QuantileModel::uniform(0, 1), 0.3), 0.3);
    EXPECT_DOUBLE_EQ(quantile(QuantileModel::empirical({3, 1, 2}), 0.5), 2.0);
    EXPECT_DOUBLE_EQ(quantile(QuantileModel::rademacher(), 0.75), 1.0);
}

TEST(Quantile, LeftContinuousAtJumps) {
    const auto rad = QuantileModel::rademacher();
    EXPECT_DOUBLE_EQ(rad(0.5), -1.0);
    const auto emp = QuantileModel::empirical({1, 2, 3, 4});
    EXPECT_DOUBLE_EQ(emp(0.25), 1.0);
    EXPECT_DOUBLE_EQ(emp(0.2500001), 2.0);
    EXPECT_DOUBLE_EQ(emp(0.999), 4.0);
    EXPECT_DOUBLE_EQ(emp(1e-6), 1.0);
}

TEST(Quantile, RejectsLevelsOutsideUnitInterval) {
    const auto u = QuantileModel::uniform();
    EXPECT_THROW(u(0.0), std::domain_error);
    EXPECT_THROW(u(1.0), std::domain_error);
    EXPECT_THROW(u(-0.2), std::domain_error);
    EXPECT_THROW(QuantileModel::empirical({}), std::invalid_argument);
}

TEST(Quantile, NormalMatchesKnownValues) {
    const auto n = QuantileModel::normal(0, 1);
    EXPECT_NEAR(n(0.975), 1.959963984540054, 1e-12);
    EXPECT_NEAR(n(0.5), 0.0, 1e-15);
}

namespace {
std::vector<QuantileModel> random_models(Stream& rng) {
    std::vector<double> sample(57);
    for (double& x : sample) x = std::floor(rng.normal() * 4.0) / 2.0;  // includes ties
    return {QuantileModel::uniform(-1.0 - rng.uniform(), 2.0 + rng.uniform()), QuantileModel::rademacher(),
            QuantileModel::normal(rng.normal(), 0.1 + rng.uniform()), QuantileModel::point(rng.normal()),
            QuantileModel::empirical(sample)};
}
}  // namespace

TEST(Quantile, NonDecreasing) {
    Stream rng(stream_key(7, 1, 0, 0));
    for (int trial = 0; trial < 40; ++trial)
        for (const auto& model : random_models(rng))
            for (int k = 0; k < 50; ++k) {
                double t1 = 1e-6 + (1 - 2e-6) * rng.uniform(), t2 = 1e-6 + (1 - 2e-6) * rng.uniform();
                if (t1 > t2) std::swap(t1, t2);
                ASSERT_LE(model(t1), model(t2));
            }
}

TEST(AverageQuantile, Examples) {
    EXPECT_NEAR(average_quantile(QuantileModel::uniform(0, 1), 0.2, 0.6), 0.4, 1e-10);
    EXPECT_NEAR(average_quantile(QuantileModel::rademacher(), 0.6, 0.9), 1.0, 1e-10);
    EXPECT_DOUBLE_EQ(average_quantile(QuantileModel::empirical({0, 10}), 0.25, 0.75), 5.0);
}

TEST(AverageQuantile, Errors) {
    const auto u = QuantileModel::uniform();
    EXPECT_THROW(average_quantile(u, 0.5, 0.5), std::invalid_argument);
    EXPECT_THROW(average_quantile(u, 0.6, 0.4), std::invalid_argument);
    EXPECT_THROW(average_quantile(u, 0.0, 0.4), std::domain_error);
}

TEST(AverageQuantile, StraddlingAJump) {
    // Rademacher on [0.4, 0.7]: 0.1 at -1 and 0.2 at +1
    EXPECT_NEAR(average_quantile(QuantileModel::rademacher(), 0.4, 0.7), (-0.1 + 0.2) / 0.3, 1e-10);
    // empirical {1,2,3,4} on [0.1, 0.6]: 0.15*1 + 0.25*2 + 0.1*3
    EXPECT_NEAR(average_quantile(QuantileModel::empirical({1, 2, 3, 4}), 0.1, 0.6), (0.15 + 0.5 + 0.3) / 0.5, 1e-14);
}

TEST(AverageQuantile, NormalWindowClosedForm) {
    // E[Z | a < Z < b] = (phi(a) - phi(b)) / (Phi(b) - Phi(a))
    const auto n = QuantileModel::normal();
    const double c = 0.3, d = 0.8;
    const double a = n(c), b = n(d);
    const auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
    EXPECT_NEAR(average_quantile(n, c, d), (phi(a) - phi(b)) / (d - c), 1e-9);
}

TEST(AverageQuantile, LiesBetweenEndpointQuantiles) {
    Stream rng(stream_key(11, 1, 0, 0));
    for (int trial = 0; trial < 30; ++trial)
        for (const auto& model : random_models(rng))
            for (int k = 0; k < 20; ++k) {
                double c = 0.001 + 0.998 * rng.uniform(), d = 0.001 + 0.998 * rng.uniform();
                if (c > d) std::swap(c, d);
                if (d - c < 1e-4) continue;
                const double v = average_quantile(model, c, d);
                ASSERT_GE(v, model(c) - 1e-9);
                ASSERT_LE(v, model(d) + 1e-9);  // Q(d-) <= Q(d)
            }
}

TEST(AverageQuantile, SymmetricPairIdentity) {
    Stream rng(stream_key(13, 1, 0, 0));
    std::vector<double> sample(1000);
    for (double& x : sample) x = rng.normal();
    for (const auto& g1 : {QuantileModel::empirical(sample), QuantileModel::normal(0.3, 2.0),
                           QuantileModel::uniform(-1, 3), QuantileModel::rademacher()}) {
        const auto g2 = g1.negated();
        for (int k = 0; k < 40; ++k) {
            double c = 0.01 + 0.98 * rng.uniform(), d = 0.01 + 0.98 * rng.uniform();
            if (c > d) std::swap(c, d);
            if (d - c < 1e-3) continue;
            ASSERT_NEAR(average_quantile(g1, c, d), -average_quantile(g2, 1 - d, 1 - c), 1e-9);
        }
    }
}

TEST(Feasibility, RademacherExample) {
    const auto r = QuantileModel::rademacher();
    const auto rep = feasibility_constants(r, r, r, std::array<double, 3>{0.75, 0.1, 0.1});
    EXPECT_EQ(rep.side, TailSide::PositiveTail);
    EXPECT_NEAR(rep.windows[0].first, 0.75, 1e-15);
    EXPECT_NEAR(rep.windows[0].second, 0.8, 1e-12);
    EXPECT_NEAR(rep.windows[1].first, 0.1, 1e-15);
    EXPECT_NEAR(rep.windows[1].second, 0.15, 1e-12);
    EXPECT_NEAR(rep.k2, 1.0, 1e-10);
    EXPECT_NEAR(rep.k3, 1.0, 1e-10);
}

TEST(Feasibility, PointMassAnchor) {
    const auto g2 = QuantileModel::uniform(-2, 1), g3 = QuantileModel::normal(0.5, 1);
    const auto rep = feasibility_constants(QuantileModel::point(1.0), g2, g3, std::array<double, 3>{0.5, 0.2, 0.2});
    EXPECT_DOUBLE_EQ(rep.window_means[0], 1.0);
    EXPECT_NEAR(rep.k2, -average_quantile(g2, rep.windows[1].first, rep.windows[1].second), 1e-12);
    EXPECT_NEAR(rep.k3, -average_quantile(g3, rep.windows[2].first, rep.windows[2].second), 1e-12);
    // windows are [beta_i, beta_i + 1 - sum beta]
    EXPECT_NEAR(rep.windows[1].first, 0.2, 1e-15);
    EXPECT_NEAR(rep.windows[1].second, 0.3, 1e-12);
}

TEST(Feasibility, DefaultBetaPicksSmallestPositiveLevel) {
    const auto u = QuantileModel::uniform(-1, 1);
    const auto rep = feasibility_constants(u, u, u);
    EXPECT_EQ(rep.side, TailSide::PositiveTail);
    EXPECT_DOUBLE_EQ(rep.s, 513.0 / 1024.0);
    EXPECT_DOUBLE_EQ(rep.beta[1], (1 - rep.s) / 4);
    EXPECT_GT(rep.window_means[0], 0.0);
}

TEST(Feasibility, NegativeTailWhenNeverPositive) {
    const auto g1 = QuantileModel::uniform(-3, -1);
    const auto rep = feasibility_constants(g1, QuantileModel::rademacher(), QuantileModel::rademacher());
    EXPECT_EQ(rep.side, TailSide::NegativeTail);
    EXPECT_LT(rep.window_means[0], 0.0);
    EXPECT_TRUE(std::isfinite(rep.k2));
}

TEST(Feasibility, Errors) {
    const auto zero = QuantileModel::point(0.0), r = QuantileModel::rademacher();
    EXPECT_THROW(feasibility_constants(zero, r, r), std::invalid_argument);
    EXPECT_THROW(feasibility_constants(r, r, r, std::array<double, 3>{0.5, 0.3, 0.2}), std::invalid_argument);
    EXPECT_THROW(feasibility_constants(r, r, r, std::array<double, 3>{0.5, -0.1, 0.2}), std::invalid_argument);
}

TEST(Feasibility, SymmetricPairEmpiricalNormal) {
    Stream rng(stream_key(2024, 2, 0, 0));
    std::vector<double> sample(10000);
    for (double& x : sample) x = rng.normal();
    const auto g = QuantileModel::empirical(sample);
    const auto rep = symmetric_pair_constants(g, g, 1.5);
    EXPECT_DOUBLE_EQ(rep.k2, 1.5);
    EXPECT_TRUE(std::isfinite(rep.k3));
    EXPECT_GT(rep.window_means[0], rep.window_means[1] / 1.5);
    EXPECT_GT(rep.window_means[1], 0.0);
    EXPECT_THROW(symmetric_pair_constants(g, g, 1.0), std::invalid_argument);
}

namespace {

struct TwoPoint {
    std::array<double, 2> x;
    std::array<double, 2> p;
};

/// Grid search (step 1e-3) for a coupling of Y_i = a_i X_i, X_i ~ law_i,
/// supported on zero-sum atoms. Returns nullopt when there are too many
/// zero-sum atoms for the grid to be enumerated.
std::optional<bool> zero_sum_coupling_exists(const std::array<TwoPoint, 3>& law, const std::array<double, 3>& a) {
    std::vector<std::array<int, 3>> zero;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                if (std::abs(a[0] * law[0].x[i] + a[1] * law[1].x[j] + a[2] * law[2].x[k]) < 1e-12)
                    zero.push_back({i, j, k});
    if (zero.empty()) return false;
    if (zero.size() > 3) return std::nullopt;
    const int G = 1000;
    std::vector<int> w(zero.size(), 0);
    auto check = [&] {
        for (int c = 0; c < 3; ++c) {
            double m0 = 0.0;
            for (std::size_t z = 0; z < zero.size(); ++z)
                if (zero[z][c] == 0) m0 += w[z] / static_cast<double>(G);
            if (std::abs(m0 - law[c].p[0]) > 1e-3) return false;
        }
        return true;
    };
    if (zero.size() == 1) {
        w[0] = G;
        return check();
    }
    for (int u = 0; u <= G; ++u) {
        if (zero.size() == 2) {
            w[0] = u;
            w[1] = G - u;
            if (check()) return true;
            continue;
        }
        for (int v = 0; u + v <= G; ++v) {
            w[0] = u;
            w[1] = v;
            w[2] = G - u - v;
            if (check()) return true;
        }
    }
    return false;
}

QuantileModel as_model(const TwoPoint& t) {
    // empirical sample of size 10 reproducing probabilities in tenths
    std::vector<double> s;
    const int k = static_cast<int>(std::lround(t.p[0] * 10));
    for (int i = 0; i < 10; ++i) s.push_back(i < k ? t.x[0] : t.x[1]);
    return QuantileModel::empirical(s);
}

}  // namespace

TEST(Feasibility, CertificateSoundOnSmallDiscreteInstances) {
    Stream rng(stream_key(99, 3, 0, 0));
    int certified = 0, nontrivial = 0;
    for (int trial = 0; trial < 400; ++trial) {
        std::array<TwoPoint, 3> law;
        for (auto& l : law) {
            double lo = -1.0 - static_cast<double>(rng.uniform_index(3));
            double hi = 1.0 + static_cast<double>(rng.uniform_index(4));
            const double q = (1 + static_cast<double>(rng.uniform_index(9))) / 10.0;
            l = {{lo, hi}, {q, 1.0 - q}};
        }
        const std::array<double, 3> a{1.0 + static_cast<double>(rng.uniform_index(5)),
                                      1.0 + static_cast<double>(rng.uniform_index(3)),
                                      1.0 + static_cast<double>(rng.uniform_index(3))};
        const auto rep = feasibility_constants(as_model(law[0]), as_model(law[1]), as_model(law[2]));
        if (!rep.certifies(a[0], a[1], a[2])) continue;
        const auto exists = zero_sum_coupling_exists(law, a);
        if (!exists) continue;
        ++certified;
        ASSERT_FALSE(*exists) << "certified instance admits a zero-sum coupling, trial " << trial;
        std::vector<int> dummy;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    if (std::abs(a[0] * law[0].x[i] + a[1] * law[1].x[j] + a[2] * law[2].x[k]) < 1e-12)
                        dummy.push_back(1);
        nontrivial += !dummy.empty();
    }
    EXPECT_GT(certified, 20);
    EXPECT_GT(nontrivial, 0);
}

TEST(Feasibility, BruteForceFindsKnownCoupling) {
    // Y1 = 2 X1, X1 ~ Rademacher; X2 = X3 = -X1 sums to zero
    const std::array<TwoPoint, 3> law{TwoPoint{{-1, 1}, {0.5, 0.5}}, TwoPoint{{-1, 1}, {0.5, 0.5}},
                                      TwoPoint{{-1, 1}, {0.5, 0.5}}};
    EXPECT_TRUE(*zero_sum_coupling_exists(law, {2, 1, 1}));
    const auto r = QuantileModel::rademacher();
    EXPECT_FALSE(feasibility_constants(r, r, r).certifies(2, 1, 1));
}

TEST(GrowthDiagnostic, Examples) {
    const auto g = growth_bound_diagnostic(ScalingFunction::type2(2, 1.0), 1.5, 1, 1024);
    EXPECT_NEAR(g.c_m, 1.0 - 1.5 / 1024.0, 1e-15);
    EXPECT_EQ(g.argmax_n, 1024u);
    EXPECT_DOUBLE_EQ(g.boundary_b_m, 1.0);

    const auto t1 = growth_bound_diagnostic(ScalingFunction::type1(), 2.0, 5, 100);
    EXPECT_DOUBLE_EQ(t1.c_m, -1.0);

    const auto t3 = growth_bound_diagnostic(ScalingFunction::type3(1.0), 1.1, 1, 10000);
    EXPECT_LT(t3.c_m, 1.0);
    // (n+1) - 1.1 n decreases in n, so the max sits at the start of the range
    EXPECT_EQ(t3.argmax_n, 1u);
    double prev = INFINITY;
    for (std::uint64_t n = 1; n <= 200; ++n) {
        const double v = (n + 1.0) - 1.1 * n;
        EXPECT_LE(v, prev);
        prev = v;
    }
}

TEST(GrowthDiagnostic, TypeIIBoundedByOne) {
    for (std::uint64_t p : {2, 3, 5})
        for (std::uint64_t n_max : {10, 100, 3000}) {
            const auto g = growth_bound_diagnostic(ScalingFunction::type2(p, 0.7), 1.2, 3, n_max);
            EXPECT_LE(g.c_m, 1.0);
        }
}

TEST(GrowthDiagnostic, Errors) {
    ScalingFunction bad;
    bad.kind = ScalingKind::NonConforming;
    EXPECT_THROW(growth_bound_diagnostic(bad, 1.5, 1, 10), std::invalid_argument);
    EXPECT_THROW(growth_bound_diagnostic(ScalingFunction::type1(), 1.0, 1, 10), std::invalid_argument);
    EXPECT_THROW(min_bound_diagnostic(bad, 1, 1, 10), std::invalid_argument);
}

TEST(MinBoundDiagnostic, Examples) {
    const auto d2 = min_bound_diagnostic(ScalingFunction::type2(2, 1.0), 1, 1, 2048);
    EXPECT_DOUBLE_EQ(d2.d_m, 1.0);

    // Consecutive integers are never both divisible by 3, so one of them has
    // norm 1 and the minimum of the pairwise max is 1.
    const auto d3 = min_bound_diagnostic(ScalingFunction::type2(3, 1.0), 1, 1, 2048);
    EXPECT_DOUBLE_EQ(d3.d_m, 1.0);

    // b(n) = sqrt(n): min over n of max(sqrt(n), sqrt(n+2)) = sqrt(3) at n = 1
    const auto t3 = min_bound_diagnostic(ScalingFunction::type3(0.5), 2, 1, 100);
    EXPECT_DOUBLE_EQ(t3.d_m, std::sqrt(3.0));
    EXPECT_EQ(t3.argmin_n, 1u);
}

TEST(MinBoundDiagnostic, TypeIIPositiveUniformlyInRange) {
    // with tau = p, n tau is a multiple of p but n tau + 1 is not
    for (std::uint64_t n_max : {16, 256, 4096}) {
        const auto d = min_bound_diagnostic(ScalingFunction::type2(2, 0.5), 1, 2, n_max);
        EXPECT_DOUBLE_EQ(d.d_m, 1.0);
        const auto e = min_bound_diagnostic(ScalingFunction::type2(3, 0.5), 3, 3, n_max);
        EXPECT_GE(e.d_m, std::pow(3.0, -0.5) - 1e-15);
    }
}
