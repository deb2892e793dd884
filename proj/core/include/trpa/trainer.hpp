#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trpa/losses.hpp"
#include "trpa/policy.hpp"
#include "trpa/preference.hpp"
#include "trpa/sampling.hpp"

namespace trpa {

/// Synthetic task: each response id carries a fixed preference level and,
/// optionally, a scalar reward. Generation is replaced by sampling ids.
struct Environment {
    SpacePtr space;
    PromptDist prompts;
    LevelTable levels;
    std::optional<RewardTable> rewards;
    Policy reference;
    Policy initial;

    void validate() const;

    /// One prompt, responses {correct, wrong-answer, bad-format} at levels
    /// {1, 2, 4} with rewards {1, 0, -1}; uniform reference and start.
    static Environment bandit();
};

enum class Algorithm { trpa, grpo, online_dpo, pa };

Algorithm algorithm_from_string(std::string_view name);
std::string to_string(Algorithm algorithm);

struct GrpoConfig {
    double clip_eps = 0.2;
    double beta_kl = 0.0;
    /// Reward per preference level when the environment has no rewards.
    std::array<double, 4> level_rewards{1.0, 0.0, -0.5, -1.0};
};

struct TrainConfig {
    Algorithm algorithm = Algorithm::trpa;
    std::size_t steps = 2000;
    double lr = 0.05;
    std::size_t batch_prompts = 4;
    std::size_t rollouts_per_prompt = 8;
    double temperature = 1.0;
    std::size_t snapshot_every = 1;
    std::uint64_t seed = 0;
    std::size_t inner_steps = 1;
    TrpaConfig trpa{KtpoConfig{0.1, 2.0}, 0.0, EvalMode::sampled};
    GrpoConfig grpo;

    void validate() const;
};

struct TrainRecord {
    std::size_t step = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    double entropy = 0.0;
    double winner_logratio = 0.0;
    double loser_logratio = 0.0;
    double bound_slack = 0.0;  ///< NaN unless exact mode with rewards
};

struct TrainResult {
    std::vector<TrainRecord> records;
    Policy final_policy;
    bool diverged = false;
    std::size_t diverged_at = 0;
    std::string diagnostic;
    /// Fingerprint of pi_old used at every step (snapshot audit trail).
    std::vector<std::uint64_t> old_fingerprints;
};

/// `g` independent draws from softmax(logits / temperature) of prompt x.
std::vector<std::size_t> sample_responses(const Policy& old_policy, std::size_t x, std::size_t g, double temperature,
                                          Rng& rng);

struct RolloutBatch {
    std::size_t prompt = 0;
    std::vector<std::size_t> responses;
};

/// Draws `batch_prompts` prompts from D (with replacement) and `g` responses
/// for each. Requires g >= 2.
std::vector<RolloutBatch> rollout(const Policy& old_policy, const PromptDist& prompts, std::size_t batch_prompts,
                                  std::size_t g, double temperature, Rng& rng);

struct LogitRatioMeans {
    double winner = 0.0;
    double loser = 0.0;
};

/// Mean log(pi_theta / pi_ref) over the winner and loser sides of `pairs`,
/// optionally weighted.
LogitRatioMeans logit_ratio_metrics(const Policy& theta, const Policy& ref, std::span<const PreferencePair> pairs,
                                    std::span<const double> weights = {});

/// Probability mass on level-1 responses, averaged over D.
double level1_mass(const Policy& policy, const Environment& env);

TrainResult train(const Environment& env, const TrainConfig& cfg);

}  // namespace trpa
