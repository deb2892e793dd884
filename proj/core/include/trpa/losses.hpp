#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "trpa/policy.hpp"
#include "trpa/preference.hpp"
#include "trpa/rules.hpp"
#include "trpa/sampling.hpp"
#include "trpa/table.hpp"

namespace trpa {

/// Objective value together with its exact gradient with respect to the
/// policy logits.
struct LossValue {
    double value = 0.0;
    RaggedTable grad;
};

enum class EvalMode { exact, sampled };

struct TrpaConfig {
    KtpoConfig ktpo;
    double lambda = 0.0;  ///< weight of E_x KL(pi_old || pi_theta)
    EvalMode mode = EvalMode::sampled;

    void validate() const;
};

/// One observed comparison. `y1_wins` is the sampled preference outcome z.
struct PairSample {
    PreferencePair pair;
    bool y1_wins = true;
    double weight = 1.0;
};

/// -weighted mean of log sigmoid(margin(winner, loser)). Throws DomainError on
/// an empty dataset.
LossValue dpo_loss(const Policy& theta, const Policy& ref, std::span<const PairSample> dataset, double beta);

/// On-policy pair objective E_{x, y1, y2 ~ pi_theta} f(p*, p_theta) with f the
/// binary cross-entropy (Online DPO) or binary KL (PA).
enum class OnlineObjective { cross_entropy, kl };

/// Exact evaluation split into the two gradient components: the score term
/// (f times the gradient of the sampling weights pi(y1) pi(y2)) and the direct
/// term (sampling weights times the gradient of f).
struct OnlineEvaluation {
    double value = 0.0;
    RaggedTable score;
    RaggedTable direct;

    RaggedTable total() const;
};

/// Requires a smooth (Bradley-Terry) preference model.
OnlineEvaluation evaluate_online(const Policy& theta, const Policy& ref, const PromptDist& prompts,
                                 const PreferenceModel& pref, double beta, OnlineObjective objective);

LossValue online_dpo_loss(const Policy& theta, const Policy& ref, const PromptDist& prompts,
                          const PreferenceModel& pref, double beta);
LossValue pa_loss(const Policy& theta, const Policy& ref, const PromptDist& prompts, const PreferenceModel& pref,
                  double beta);

/// E_{x, y1, y2 ~ pi_theta}[binary_entropy(p*)]: the gap between the two
/// online objectives.
double expected_preference_entropy(const Policy& theta, const PromptDist& prompts, const PreferenceModel& pref);

/// lambda * E_x KL(pi_old(.|x) || pi_theta(.|x)).
LossValue trust_region_penalty(const Policy& theta, const Policy& old_policy, const PromptDist& prompts,
                               double lambda);

/// TRPA objective: weighted mean over rule pairs of
/// -log sigmoid(beta(y1) * (logratio(y1) - logratio(y2))) plus the trust-region
/// penalty. Empty `weights` means uniform. Empty pairs are legal only when
/// lambda > 0.
LossValue trpa_loss(const Policy& theta, const Policy& ref, const Policy& old_policy, const PromptDist& prompts,
                    std::span<const PreferencePair> pairs, const TrpaConfig& cfg,
                    std::span<const double> weights = {});

struct WeightedPairs {
    std::vector<PreferencePair> pairs;
    std::vector<double> weights;
};

/// Every distinct-level pair of every prompt, weighted by the probability
/// D(x) * 2 pi_old(i) pi_old(j) of drawing it as an unordered rollout pair.
WeightedPairs exact_pair_distribution(const Policy& old_policy, const PromptDist& prompts, const LevelTable& levels);

/// Responses of one prompt that all share a level.
struct PromptGroup {
    std::size_t prompt = 0;
    std::vector<std::size_t> responses;
    PreferenceLevel level = PreferenceLevel::correct;
};

/// Single-sided fallback when no pair can be formed. Level-1 groups are pushed
/// up with beta(y) = N * beta; other groups are pushed down with base beta.
LossValue promptwise_loss(const Policy& theta, const Policy& ref, const PromptGroup& group, const TrpaConfig& cfg);

/// Sampled responses of one prompt with their scalar rewards.
struct RolloutGroup {
    std::size_t prompt = 0;
    std::vector<std::size_t> responses;
    std::vector<double> rewards;
};

/// Threshold under which a reward group counts as constant.
inline constexpr double kAdvantageStdFloor = 1e-8;

/// (r - mean) / std with the population std; constant groups give zeros.
std::vector<double> group_advantages(std::span<const double> rewards);

/// Negated clipped surrogate with group-normalised advantages, plus
/// beta_kl * KL(pi_theta || pi_ref) per group prompt. Groups need G >= 2.
LossValue grpo_loss(const Policy& theta, const Policy& old_policy, const Policy& ref,
                    std::span<const RolloutGroup> groups, double clip_eps, double beta_kl);

/// L^{old}(new) = -E_{x, y1, y2 ~ old}[p* log p_new + (1-p*) log (1-p_new)] + E_{old}[M].
double theorem_surrogate(const Policy& new_policy, const Policy& old_policy, const Policy& ref,
                         const PromptDist& prompts, const PreferenceModel& pref, double beta);

/// max over (x, y1, y2) of KL(p* || p_new).
double max_preference_kl(const Policy& new_policy, const Policy& ref, const PreferenceModel& pref, double beta);

/// 4 (U_r + 2 log 2).
double bound_coefficient(double max_pref_kl);

struct BoundCheck {
    double lhs = 0.0;      ///< L^{new}(new)
    double rhs = 0.0;      ///< L^{old}(new) + a1 sqrt(KL_max(old || new))
    double surrogate = 0.0;
    double max_pref_kl = 0.0;
    double a1 = 0.0;
    double kl_max = 0.0;

    double slack() const noexcept { return rhs - lhs; }
};

BoundCheck monotonic_bound(const Policy& old_policy, const Policy& new_policy, const Policy& ref,
                           const PromptDist& prompts, const PreferenceModel& pref, double beta);

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
};

/// Draws x ~ D, y1, y2 ~ pi_theta, z ~ p* and averages the per-sample DPO loss
/// (plus M for the KL objective).
MonteCarloEstimate sample_online_loss(const Policy& theta, const Policy& ref, const PromptDist& prompts,
                                      const PreferenceModel& pref, double beta, OnlineObjective objective,
                                      std::size_t samples, Rng& rng);

/// Draws rollout pairs from pi_old, keeps distinct-level ones and averages the
/// TRPA pair loss. The trust-region term is not included.
MonteCarloEstimate sample_trpa_pair_loss(const Policy& theta, const Policy& ref, const Policy& old_policy,
                                         const PromptDist& prompts, const LevelTable& levels, const TrpaConfig& cfg,
                                         std::size_t samples, Rng& rng);

/// Converts a gradient over log-probabilities of one row into a gradient over
/// that row's logits: g_logit = g_lp - pi * sum(g_lp).
void logprob_to_logit_grad(std::span<const double> probs, std::span<double> grad);

}  // namespace trpa
