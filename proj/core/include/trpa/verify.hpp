#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "trpa/losses.hpp"
#include "trpa/policy.hpp"
#include "trpa/preference.hpp"

namespace trpa {

/// Exact-mode certification instance: response space, reference policy,
/// rewards feeding a Bradley-Terry preference, prompt distribution and beta.
struct Instance {
    std::string name;
    SpacePtr space;
    Policy ref;
    RewardTable rewards;
    PromptDist prompts;
    double beta = 1.0;

    PreferenceModel preference() const { return PreferenceModel::bradley_terry(rewards); }
    Policy target() const { return target_distribution(ref, rewards, beta); }
};

/// Two prompts with three responses each, rewards {0, 1, 2} per prompt in
/// different orders, non-uniform reference, beta = 1, uniform prompts.
Instance canonical_instance();

/// Random instance with 1..max_prompts prompts and 2..max_responses responses.
/// Rewards span at least 1 within every prompt.
Instance random_instance(std::uint64_t seed, std::size_t max_prompts = 3, std::size_t max_responses = 5);

/// Same instance with every reward replaced by zero.
Instance constant_reward_instance(const Instance& base);

struct Report {
    std::string claim;
    std::string instance;
    nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
    bool pass = false;

    nlohmann::ordered_json to_json() const;
};

inline constexpr double kZeroTolerance = 1e-9;
inline constexpr double kLossZeroTolerance = 1e-12;
inline constexpr double kNonzeroThreshold = 1e-3;
inline constexpr double kBoundTolerance = 1e-9;
inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-6;

/// PA is minimised by the tilted reference: loss and gradient vanish there.
Report lemma_pa_is_pba(const Instance& inst);

/// Online DPO keeps a nonzero gradient at the tilted reference, carried
/// entirely by the score term. Throws PreconditionError when some prompt has
/// constant rewards.
Report lemma_online_dpo_not_pba(const Instance& inst);

/// Score and direct gradient components of the on-policy objective at theta.
OnlineEvaluation gradient_decomposition(const Policy& theta, const Instance& inst, OnlineObjective objective);

struct SweepOptions {
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    /// Draw logits uniformly in [-logit_scale, logit_scale] instead of N(0, 1).
    bool adversarial = false;
    double logit_scale = 20.0;
};

/// Monotone-improvement bound over random (old, new) policy pairs.
Report theorem1_sweep(const Instance& inst, const SweepOptions& opts);

struct LandscapePoint {
    double p = 0.0;
    double q = 0.0;
    double cross_entropy = 0.0;
    double kl = 0.0;
};

/// grid_n x grid_n lattice of cell centres over (0,1)^2, row-major in p.
std::vector<LandscapePoint> landscape(std::size_t grid_n);

/// Shape checks on a landscape grid: KL vanishes exactly on the diagonal and
/// the cross-entropy row minimum sits at q = p with value binary_entropy(p).
Report landscape_report(const std::vector<LandscapePoint>& grid, std::size_t grid_n);

/// Loss identifiers accepted by fd_check.
const std::vector<std::string>& fd_loss_ids();

/// Central finite differences against the analytic gradient on random
/// instances. GRPO points keep every ratio at least 1e-3 from a clip boundary.
Report fd_check(const std::string& loss_id, std::size_t n_instances, std::uint64_t seed);

/// Pinsker-type tv^2 <= kl on random pairs, and 0 <= binary_entropy <= log 2
/// with the maximum only near 1/2.
Report appendix_lemmas(std::size_t n_samples, std::uint64_t seed);

/// online_dpo - pa equals E[binary_entropy(p*)] on random instances.
Report decomposition_identity(std::size_t n_instances, std::uint64_t seed);

struct ConvergenceOptions {
    std::size_t inits = 20;
    std::uint64_t seed = 0;
    double lr = 1.0;
    std::size_t max_iters = 20000;
    double grad_tol = 1e-12;
    /// Start points are log pi_ref plus N(0, init_sigma) logit noise.
    double init_sigma = 0.2;
};

/// Exact gradient descent on the on-policy objective from random starts;
/// reports the final tv_max to the tilted reference.
Report target_convergence(const Instance& inst, OnlineObjective objective, const ConvergenceOptions& opts);

}  // namespace trpa
