#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "trpa/errors.hpp"
#include "trpa/verify.hpp"

using namespace trpa;
using testing_support::policy;
using testing_support::to_rows;

namespace {

// Independent evaluation of both sides of the monotone-improvement bound.
std::pair<double, double> oracle_bound(const oracle::Rows& old_z, const oracle::Rows& new_z, const Instance& inst) {
    const auto zr = to_rows(inst.ref.logits());
    const auto r = to_rows(inst.rewards.values());
    std::vector<double> d(inst.prompts.categorical().probs().begin(), inst.prompts.categorical().probs().end());
    const double lhs = oracle::online_objective(new_z, zr, r, d, inst.beta, true);
    double surrogate = 0.0, max_pref_kl = 0.0, kl_max = 0.0;
    for (std::size_t x = 0; x < old_z.size(); ++x) {
        const auto po = oracle::softmax(old_z[x]);
        const auto pn = oracle::softmax(new_z[x]);
        const auto pr = oracle::softmax(zr[x]);
        kl_max = std::max(kl_max, oracle::kl(po, pn));
        for (std::size_t i = 0; i < po.size(); ++i) {
            for (std::size_t j = 0; j < po.size(); ++j) {
                const double ps = oracle::sigmoid(r[x][i] - r[x][j]);
                const double q = oracle::sigmoid(inst.beta * (std::log(pn[i] / pr[i]) - std::log(pn[j] / pr[j])));
                const double ce = -ps * std::log(q) - (1 - ps) * std::log(1 - q);
                surrogate += d[x] * po[i] * po[j] * (ce - oracle::binary_entropy(ps));
                max_pref_kl = std::max(max_pref_kl, ce - oracle::binary_entropy(ps));
            }
        }
    }
    const double a1 = 4.0 * (max_pref_kl + 2.0 * std::numbers::ln2);
    return {lhs, surrogate + a1 * std::sqrt(kl_max)};
}

}  // namespace

TEST(Instances, CanonicalShape) {
    const auto inst = canonical_instance();
    EXPECT_EQ(inst.space->widths(), (std::vector<std::size_t>{3, 3}));
    EXPECT_EQ(inst.beta, 1.0);
    EXPECT_EQ(to_rows(inst.rewards.values()), (oracle::Rows{{0, 1, 2}, {2, 0, 1}}));
    // Tilted reference computed independently.
    const auto zr = to_rows(inst.ref.logits());
    for (std::size_t x = 0; x < 2; ++x) {
        std::vector<double> z(3);
        for (std::size_t y = 0; y < 3; ++y) z[y] = zr[x][y] + inst.rewards.at(x, y) / inst.beta;
        const auto want = oracle::softmax(z);
        for (std::size_t y = 0; y < 3; ++y) EXPECT_NEAR(inst.target().prob(x, y), want[y], 1e-15);
    }
}

TEST(Instances, RandomInstancesAreReproducibleAndSpread) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto a = random_instance(seed);
        const auto b = random_instance(seed);
        ASSERT_EQ(a.ref.logits(), b.ref.logits());
        ASSERT_EQ(a.rewards.values(), b.rewards.values());
        for (std::size_t x = 0; x < a.space->num_prompts(); ++x) {
            const auto row = a.rewards.values().row(x);
            ASSERT_GE(*std::max_element(row.begin(), row.end()) - *std::min_element(row.begin(), row.end()), 1.0);
        }
        ASSERT_GE(a.beta, 0.5);
        ASSERT_LE(a.beta, 2.0);
    }
}

TEST(Lemmas, PaVanishesAtTarget) {
    EXPECT_TRUE(lemma_pa_is_pba(canonical_instance()).pass);
    for (std::uint64_t s = 0; s < 20; ++s) ASSERT_TRUE(lemma_pa_is_pba(random_instance(s)).pass) << s;
}

TEST(Lemmas, OnlineDpoKeepsScoreGradientAtTarget) {
    const auto rep = lemma_online_dpo_not_pba(canonical_instance());
    EXPECT_TRUE(rep.pass);
    EXPECT_NEAR(rep.metrics["grad_max_norm"].get<double>(), 0.01896, 5e-5);
    EXPECT_LE(rep.metrics["direct_term_max_norm"].get<double>(), 1e-9);
    for (std::uint64_t s = 0; s < 20; ++s) ASSERT_TRUE(lemma_online_dpo_not_pba(random_instance(s)).pass) << s;
    EXPECT_THROW(lemma_online_dpo_not_pba(constant_reward_instance(canonical_instance())), PreconditionError);
}

TEST(Lemmas, DecompositionIdentity) {
    const auto rep = decomposition_identity(100, 0);
    EXPECT_TRUE(rep.pass);
    EXPECT_LE(rep.metrics["max_abs_residual"].get<double>(), 1e-10);
}

TEST(Theorem, BoundMatchesIndependentEvaluation) {
    const auto inst = canonical_instance();
    std::mt19937_64 rng(41);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        oracle::Rows zo(2, std::vector<double>(3)), zn = zo;
        for (auto* z : {&zo, &zn})
            for (auto& row : *z)
                for (double& v : row) v = n(rng);
        const auto b = monotonic_bound(policy(inst.space, zo), policy(inst.space, zn), inst.ref, inst.prompts,
                                       inst.preference(), inst.beta);
        const auto [lhs, rhs] = oracle_bound(zo, zn, inst);
        ASSERT_NEAR(b.lhs, lhs, 1e-10);
        ASSERT_NEAR(b.rhs, rhs, 1e-10);
        ASSERT_LE(lhs, rhs);
    }
}

TEST(Theorem, SweepHoldsAndCoincidentSlackIsZero) {
    const auto inst = canonical_instance();
    for (bool adversarial : {false, true}) {
        const auto rep = theorem1_sweep(inst, SweepOptions{1000, 3, adversarial, 20.0});
        EXPECT_TRUE(rep.pass);
        EXPECT_EQ(rep.metrics["violations"].get<std::size_t>(), 0u);
        EXPECT_GE(rep.metrics["min_slack"].get<double>(), -kBoundTolerance);
        EXPECT_NEAR(rep.metrics["coincident_slack"].get<double>(), 0.0, 1e-12);
    }
    const auto same = monotonic_bound(inst.ref, inst.ref, inst.ref, inst.prompts, inst.preference(), inst.beta);
    EXPECT_EQ(same.kl_max, 0.0);
    EXPECT_NEAR(same.slack(), 0.0, 1e-15);
}

TEST(Landscape, GridValuesAndShape) {
    const std::size_t n = 201;
    const auto grid = landscape(n);
    ASSERT_EQ(grid.size(), n * n);
    const auto& mid = grid[100 * n + 100];
    EXPECT_DOUBLE_EQ(mid.p, 0.5);
    EXPECT_DOUBLE_EQ(mid.q, 0.5);
    EXPECT_NEAR(mid.cross_entropy, std::numbers::ln2, 1e-15);
    EXPECT_EQ(mid.kl, 0.0);
    for (const auto& pt : grid) {
        const double ce = -pt.p * std::log(pt.q) - (1 - pt.p) * std::log(1 - pt.q);
        ASSERT_NEAR(pt.cross_entropy, ce, 1e-12);
        ASSERT_NEAR(pt.kl, ce - oracle::binary_entropy(pt.p), 1e-12);
    }
    // Row at p closest to 0.3: cross-entropy argmin over q sits within one cell.
    const std::size_t row = 60;
    ASSERT_NEAR(grid[row * n].p, 0.3, 0.5 / static_cast<double>(n));
    const auto begin = grid.begin() + static_cast<std::ptrdiff_t>(row * n);
    const auto best = std::min_element(begin, begin + static_cast<std::ptrdiff_t>(n),
                                       [](const auto& a, const auto& b) { return a.cross_entropy < b.cross_entropy; });
    EXPECT_LE(std::abs(best->q - 0.3), 1.0 / static_cast<double>(n));
    EXPECT_TRUE(landscape_report(grid, n).pass);
    EXPECT_THROW(landscape(0), DomainError);
}

TEST(FiniteDifferences, EveryLossAgreesWithAnalyticGradient) {
    ASSERT_EQ(fd_loss_ids().size(), 7u);
    for (const auto& id : fd_loss_ids()) {
        const auto rep = fd_check(id, 100, 5);
        EXPECT_TRUE(rep.pass) << id << " " << rep.to_json().dump();
        EXPECT_LE(rep.metrics["max_relative_error"].get<double>(), kFdTolerance) << id;
    }
    EXPECT_THROW(fd_check("ppo", 1, 0), DomainError);
}

TEST(AppendixLemmas, PinskerAndEntropyBounds) {
    const auto rep = appendix_lemmas(10000, 9);
    EXPECT_TRUE(rep.pass);
    EXPECT_EQ(rep.metrics["pinsker_violations"].get<std::size_t>(), 0u);
    EXPECT_EQ(rep.metrics["entropy_violations"].get<std::size_t>(), 0u);
    EXPECT_TRUE(rep.metrics["entropy_at_half_is_log2"].get<bool>());
}

TEST(Convergence, PaReachesTargetOnlineDpoDoesNot) {
    const auto inst = canonical_instance();
    const auto pa = target_convergence(inst, OnlineObjective::kl, ConvergenceOptions{});
    EXPECT_TRUE(pa.pass) << pa.to_json().dump();
    EXPECT_LE(pa.metrics["max_tv_to_target"].get<double>(), 1e-4);
    const auto od = target_convergence(inst, OnlineObjective::cross_entropy, ConvergenceOptions{});
    EXPECT_TRUE(od.pass) << od.to_json().dump();
    EXPECT_GT(od.metrics["min_tv_to_target"].get<double>(), 1e-2);
}

TEST(Report, JsonCarriesClaimAndVerdict) {
    const auto j = lemma_pa_is_pba(canonical_instance()).to_json();
    EXPECT_TRUE(j.contains("claim"));
    EXPECT_TRUE(j.contains("instance"));
    EXPECT_TRUE(j.contains("metrics"));
    EXPECT_TRUE(j["pass"].get<bool>());
}
