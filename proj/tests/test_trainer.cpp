#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <deque>

#include "support.hpp"
#include "trpa/errors.hpp"
#include "trpa/trainer.hpp"

using namespace trpa;
using testing_support::policy;
using L = PreferenceLevel;

namespace {

TrainConfig bandit_config(Algorithm algo) {
    TrainConfig cfg;
    cfg.algorithm = algo;
    cfg.seed = 7;
    return cfg;
}

// Rolling mean over `window` steps never falls more than `slack` below the
// best rolling mean seen so far.
double worst_rolling_drop(const std::vector<TrainRecord>& records, std::size_t window) {
    std::deque<double> buf;
    double sum = 0.0, best = -1.0, worst = 0.0;
    for (const auto& r : records) {
        buf.push_back(r.accuracy);
        sum += r.accuracy;
        if (buf.size() > window) {
            sum -= buf.front();
            buf.pop_front();
        }
        if (buf.size() < window) continue;
        const double mean = sum / static_cast<double>(window);
        best = std::max(best, mean);
        worst = std::max(worst, best - mean);
    }
    return worst;
}

}  // namespace

TEST(Rollout, DeterministicRowAlwaysReturnsItsMode) {
    auto s = Space::anonymous(std::vector<std::size_t>{3});
    const auto p = policy(s, {{0.0, 800.0, 0.0}});
    Rng rng(1);
    for (auto y : sample_responses(p, 0, 100, 1.0, rng)) EXPECT_EQ(y, 1u);
}

TEST(Rollout, FrequenciesMatchPolicy) {
    auto s = Space::anonymous(std::vector<std::size_t>{4});
    const auto p = policy(s, {{0.3, -0.4, 1.0, 0.0}});
    Rng rng(2);
    const std::size_t n = 200000;
    std::vector<double> counts(4, 0.0);
    for (auto y : sample_responses(p, 0, n, 1.0, rng)) counts[y] += 1.0;
    for (std::size_t y = 0; y < 4; ++y) {
        const double q = p.prob(0, y);
        const double se = std::sqrt(q * (1.0 - q) / static_cast<double>(n));
        EXPECT_LE(std::abs(counts[y] / static_cast<double>(n) - q), 3.0 * se) << "response " << y;
    }
}

TEST(Rollout, TemperatureSharpensAndValidates) {
    auto s = Space::anonymous(std::vector<std::size_t>{2});
    const auto p = policy(s, {{0.0, 1.0}});
    Rng rng(3);
    const std::size_t n = 100000;
    const auto ys = sample_responses(p, 0, n, 0.5, rng);
    const double freq = static_cast<double>(std::count(ys.begin(), ys.end(), 1u)) / static_cast<double>(n);
    const double expect = 1.0 / (1.0 + std::exp(-2.0));
    EXPECT_LE(std::abs(freq - expect), 3.0 * std::sqrt(expect * (1 - expect) / static_cast<double>(n)));
    EXPECT_THROW(sample_responses(p, 0, 4, 0.0, rng), DomainError);
    EXPECT_THROW(sample_responses(p, 0, 4, -1.0, rng), DomainError);
}

TEST(Rollout, SameSeedSameSequence) {
    const auto env = Environment::bandit();
    Rng a(11), b(11);
    const auto ra = rollout(env.initial, env.prompts, 5, 6, 1.0, a);
    const auto rb = rollout(env.initial, env.prompts, 5, 6, 1.0, b);
    ASSERT_EQ(ra.size(), 5u);
    for (std::size_t i = 0; i < ra.size(); ++i) {
        EXPECT_EQ(ra[i].prompt, rb[i].prompt);
        EXPECT_EQ(ra[i].responses, rb[i].responses);
        EXPECT_EQ(ra[i].responses.size(), 6u);
    }
    EXPECT_THROW(rollout(env.initial, env.prompts, 1, 1, 1.0, a), DomainError);
}

TEST(LogitRatioMetrics, Examples) {
    const auto env = Environment::bandit();
    const std::vector<PreferencePair> pairs{{0, 0, 1, L::correct, L::wrong}, {0, 0, 2, L::correct, L::bad_format}};
    const auto at_ref = logit_ratio_metrics(env.reference, env.reference, pairs);
    EXPECT_EQ(at_ref.winner, 0.0);
    EXPECT_EQ(at_ref.loser, 0.0);

    const auto theta = policy(env.space, {{1.0, 0.0, -1.0}});
    const auto m = logit_ratio_metrics(theta, env.reference, pairs, std::vector<double>{1.0, 3.0});
    const double lse = std::log(std::exp(1.0) + 1.0 + std::exp(-1.0));
    const double lr0 = 1.0 - lse + std::log(3.0);
    EXPECT_NEAR(m.winner, lr0, 1e-14);
    EXPECT_NEAR(m.loser, (1.0 * (0.0 - lse) + 3.0 * (-1.0 - lse)) / 4.0 + std::log(3.0), 1e-14);
    EXPECT_THROW(logit_ratio_metrics(theta, env.reference, std::vector<PreferencePair>{}), DomainError);
}

TEST(TrainConfig, RejectsInvalidCombinations) {
    TrainConfig cfg;
    cfg.algorithm = Algorithm::grpo;
    cfg.trpa.mode = EvalMode::exact;
    EXPECT_THROW(cfg.validate(), DomainError);
    cfg.algorithm = Algorithm::pa;
    cfg.trpa.mode = EvalMode::sampled;
    EXPECT_THROW(cfg.validate(), DomainError);
    cfg = TrainConfig{};
    cfg.lr = 0.0;
    EXPECT_THROW(cfg.validate(), DomainError);
    cfg = TrainConfig{};
    cfg.rollouts_per_prompt = 1;
    EXPECT_THROW(cfg.validate(), DomainError);
    cfg = TrainConfig{};
    cfg.snapshot_every = 0;
    EXPECT_THROW(cfg.validate(), DomainError);
    EXPECT_EQ(algorithm_from_string("online-dpo"), Algorithm::online_dpo);
    EXPECT_EQ(to_string(Algorithm::grpo), "grpo");
    EXPECT_THROW(algorithm_from_string("ppo"), DomainError);
}

TEST(Train, ZeroStepsReturnsInitialPolicy) {
    auto cfg = bandit_config(Algorithm::trpa);
    cfg.steps = 0;
    const auto env = Environment::bandit();
    const auto res = train(env, cfg);
    EXPECT_TRUE(res.records.empty());
    EXPECT_EQ(res.final_policy.logits(), env.initial.logits());
    EXPECT_FALSE(res.diverged);
}

TEST(Train, TrpaBanditLearnsToPreferCorrect) {
    const auto env = Environment::bandit();
    const auto res = train(env, bandit_config(Algorithm::trpa));
    ASSERT_FALSE(res.diverged) << res.diagnostic;
    ASSERT_EQ(res.records.size(), 2000u);
    EXPECT_GE(level1_mass(res.final_policy, env), 0.95);
    EXPECT_GT(res.records.back().winner_logratio, 0.0);
    EXPECT_LT(res.records.back().loser_logratio, 0.0);
    EXPECT_LE(worst_rolling_drop(res.records, 200), 0.02);
}

TEST(Train, GrpoBanditLearnsToPreferCorrect) {
    const auto env = Environment::bandit();
    const auto res = train(env, bandit_config(Algorithm::grpo));
    ASSERT_FALSE(res.diverged) << res.diagnostic;
    EXPECT_GE(level1_mass(res.final_policy, env), 0.95);
    EXPECT_LE(worst_rolling_drop(res.records, 200), 0.02);
}

TEST(Train, OnlineObjectivesImproveAccuracy) {
    const auto env = Environment::bandit();
    for (auto algo : {Algorithm::online_dpo, Algorithm::pa}) {
        auto cfg = bandit_config(algo);
        cfg.steps = 300;
        cfg.lr = 0.5;
        cfg.trpa.ktpo.beta = 1.0;
        cfg.trpa.mode = EvalMode::exact;
        const auto res = train(env, cfg);
        ASSERT_FALSE(res.diverged) << res.diagnostic;
        EXPECT_GT(level1_mass(res.final_policy, env), level1_mass(env.initial, env) + 0.1) << to_string(algo);
    }
}

TEST(Train, SameSeedReproducesRun) {
    auto cfg = bandit_config(Algorithm::trpa);
    cfg.steps = 200;
    const auto env = Environment::bandit();
    const auto a = train(env, cfg);
    const auto b = train(env, cfg);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].loss, b.records[i].loss);
        EXPECT_EQ(a.records[i].accuracy, b.records[i].accuracy);
    }
    EXPECT_EQ(a.final_policy.logits(), b.final_policy.logits());
    cfg.seed = 8;
    EXPECT_NE(train(env, cfg).final_policy.logits(), a.final_policy.logits());
}

TEST(Train, SnapshotIsFrozenBetweenRefreshes) {
    auto cfg = bandit_config(Algorithm::trpa);
    cfg.steps = 50;
    cfg.snapshot_every = 5;
    const auto res = train(Environment::bandit(), cfg);
    ASSERT_EQ(res.old_fingerprints.size(), 50u);
    for (std::size_t i = 0; i < 50; ++i) {
        if (i % 5 != 0) {
            EXPECT_EQ(res.old_fingerprints[i], res.old_fingerprints[i - 1]) << "step " << i;
        } else if (i > 0) {
            EXPECT_NE(res.old_fingerprints[i], res.old_fingerprints[i - 1]) << "step " << i;
        }
    }
}

TEST(Train, TrustRegionAnchorsPolicyToSnapshot) {
    const auto env = Environment::bandit();
    auto cfg = bandit_config(Algorithm::trpa);
    cfg.steps = 200;
    cfg.snapshot_every = cfg.steps;
    cfg.trpa.mode = EvalMode::exact;
    cfg.trpa.lambda = 30.0;
    const auto anchored = train(env, cfg);
    ASSERT_FALSE(anchored.diverged) << anchored.diagnostic;
    EXPECT_LE(tv_max(anchored.final_policy, env.initial), 0.05);

    cfg.trpa.lambda = 0.0;
    const auto free_run = train(env, cfg);
    EXPECT_GT(tv_max(free_run.final_policy, env.initial), tv_max(anchored.final_policy, env.initial));
}

TEST(Train, ExactModeRespectsImprovementBound) {
    auto cfg = bandit_config(Algorithm::trpa);
    cfg.steps = 300;
    cfg.trpa.mode = EvalMode::exact;
    const auto res = train(Environment::bandit(), cfg);
    ASSERT_FALSE(res.diverged);
    for (const auto& r : res.records) {
        ASSERT_TRUE(std::isfinite(r.bound_slack));
        ASSERT_GE(r.bound_slack, -1e-9) << "step " << r.step;
    }
    cfg.trpa.mode = EvalMode::sampled;
    cfg.steps = 3;
    for (const auto& r : train(Environment::bandit(), cfg).records) EXPECT_TRUE(std::isnan(r.bound_slack));
}

TEST(Train, NonFiniteLossIsReportedAsDivergence) {
    // Logits this far apart underflow the log-probabilities to -inf, so the
    // first loss evaluation is not finite.
    auto env = Environment::bandit();
    env.initial = policy(env.space, {{1.7e308, 0.0, -1.7e308}});
    auto cfg = bandit_config(Algorithm::trpa);
    cfg.steps = 50;
    cfg.trpa.mode = EvalMode::exact;
    const auto res = train(env, cfg);
    EXPECT_TRUE(res.diverged);
    EXPECT_FALSE(res.diagnostic.empty());
    ASSERT_EQ(res.records.size(), 1u);
    EXPECT_EQ(res.diverged_at, 0u);
    EXPECT_TRUE(std::isnan(res.records.back().accuracy));
}

TEST(Environment, RejectsMismatchedTables) {
    auto env = Environment::bandit();
    env.levels.push_back({L::correct});
    EXPECT_THROW(env.validate(), ShapeError);
    auto env2 = Environment::bandit();
    env2.rewards.reset();
    auto cfg = bandit_config(Algorithm::pa);
    cfg.trpa.mode = EvalMode::exact;
    EXPECT_THROW(train(env2, cfg), PreconditionError);
}
