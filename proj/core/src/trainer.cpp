#include "trpa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "trpa/errors.hpp"

namespace trpa {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool all_finite(const LossValue& l) {
    if (!std::isfinite(l.value)) return false;
    return std::all_of(l.grad.flat().begin(), l.grad.flat().end(), [](double g) { return std::isfinite(g); });
}

double reward_of(const Environment& env, const GrpoConfig& g, std::size_t x, std::size_t y) {
    if (env.rewards) return env.rewards->at(x, y);
    return g.level_rewards[static_cast<std::size_t>(to_int(env.levels[x][y]) - 1)];
}

// Loss of one optimisation step, evaluated at theta against the frozen batch.
class StepObjective {
public:
    StepObjective(const Environment& env, const TrainConfig& cfg, const Policy& old_policy,
                  std::span<const RolloutBatch> batch)
        : env_(env), cfg_(cfg), old_(old_policy) {
        if (cfg.trpa.mode == EvalMode::exact) {
            prepare_exact();
        } else {
            prepare_sampled(batch);
        }
    }

    LossValue operator()(const Policy& theta) const {
        switch (cfg_.algorithm) {
            case Algorithm::trpa: return trpa_objective(theta);
            case Algorithm::grpo: return grpo_loss(theta, old_, env_.reference, groups_, cfg_.grpo.clip_eps,
                                                   cfg_.grpo.beta_kl);
            case Algorithm::online_dpo:
            case Algorithm::pa: return online_objective(theta);
        }
        throw PreconditionError("unknown algorithm");
    }

private:
    void prepare_exact() {
        if (cfg_.algorithm == Algorithm::trpa) {
            auto dist = exact_pair_distribution(old_, env_.prompts, env_.levels);
            pairs_ = std::move(dist.pairs);
            weights_ = std::move(dist.weights);
            // A prompt whose whole response space shares one level can never
            // yield a pair, so it falls back to the prompt-wise loss.
            for (std::size_t x = 0; x < env_.levels.size(); ++x) {
                const auto& lv = env_.levels[x];
                if (std::all_of(lv.begin(), lv.end(), [&](PreferenceLevel l) { return l == lv.front(); })) {
                    PromptGroup g{x, {}, lv.front()};
                    for (std::size_t y = 0; y < lv.size(); ++y) g.responses.push_back(y);
                    promptwise_.push_back(std::move(g));
                }
            }
        } else if (cfg_.algorithm == Algorithm::grpo) {
            throw PreconditionError("grpo runs on sampled rollouts only");
        }
    }

    void prepare_sampled(std::span<const RolloutBatch> batch) {
        Rng z_rng(cfg_.seed ^ 0x9e3779b97f4a7c15ULL ^ old_.fingerprint());
        for (const auto& rb : batch) {
            const std::size_t x = rb.prompt;
            switch (cfg_.algorithm) {
                case Algorithm::trpa: {
                    std::vector<PreferenceLevel> lv;
                    for (std::size_t y : rb.responses) lv.push_back(env_.levels[x][y]);
                    const auto local = build_pairs(x, lv);
                    if (local.empty()) {
                        promptwise_.push_back({x, rb.responses, lv.front()});
                    }
                    for (auto p : local) {
                        p.y1 = rb.responses[p.y1];
                        p.y2 = rb.responses[p.y2];
                        pairs_.push_back(p);
                    }
                    break;
                }
                case Algorithm::grpo: {
                    RolloutGroup g{x, rb.responses, {}};
                    for (std::size_t y : rb.responses) g.rewards.push_back(reward_of(env_, cfg_.grpo, x, y));
                    groups_.push_back(std::move(g));
                    break;
                }
                case Algorithm::online_dpo:
                case Algorithm::pa: {
                    const auto pref = PreferenceModel::bradley_terry(*env_.rewards);
                    std::uniform_real_distribution<double> coin(0.0, 1.0);
                    for (std::size_t i = 0; i + 1 < rb.responses.size(); i += 2) {
                        const std::size_t a = rb.responses[i];
                        const std::size_t b = rb.responses[i + 1];
                        const double p1 = a == b ? 0.5 : pref.p1(x, a, b);
                        samples_.push_back({{x, a, b, env_.levels[x][a], env_.levels[x][b]}, coin(z_rng) < p1, 1.0});
                    }
                    break;
                }
            }
        }
    }

    LossValue trpa_objective(const Policy& theta) const {
        TrpaConfig pair_cfg = cfg_.trpa;
        pair_cfg.lambda = 0.0;
        const double np = pairs_.empty() ? 0.0 : 1.0;
        const double ng = static_cast<double>(promptwise_.size());
        LossValue out{0.0, theta.logits().zeros_like()};
        // Sampled mode averages per item; exact mode already carries
        // probability weights, so pairs count as a single item there.
        const double pair_items =
            cfg_.trpa.mode == EvalMode::sampled ? static_cast<double>(pairs_.size()) : np;
        const double items = pair_items + ng;
        if (!pairs_.empty()) {
            const auto l = trpa_loss(theta, env_.reference, old_, env_.prompts, pairs_, pair_cfg, weights_);
            out.value += pair_items / items * l.value;
            out.grad.axpy(pair_items / items, l.grad);
        }
        for (const auto& g : promptwise_) {
            const auto l = promptwise_loss(theta, env_.reference, g, pair_cfg);
            out.value += l.value / items;
            out.grad.axpy(1.0 / items, l.grad);
        }
        if (cfg_.trpa.lambda > 0.0) {
            const auto reg = trust_region_penalty(theta, old_, env_.prompts, cfg_.trpa.lambda);
            out.value += reg.value;
            out.grad.axpy(1.0, reg.grad);
        }
        return out;
    }

    LossValue online_objective(const Policy& theta) const {
        const double beta = cfg_.trpa.ktpo.beta;
        if (cfg_.trpa.mode == EvalMode::exact) {
            const auto pref = PreferenceModel::bradley_terry(*env_.rewards);
            return cfg_.algorithm == Algorithm::pa ? pa_loss(theta, env_.reference, env_.prompts, pref, beta)
                                                   : online_dpo_loss(theta, env_.reference, env_.prompts, pref, beta);
        }
        return dpo_loss(theta, env_.reference, samples_, beta);
    }

    const Environment& env_;
    const TrainConfig& cfg_;
    const Policy& old_;
    std::vector<PreferencePair> pairs_;
    std::vector<double> weights_;
    std::vector<PromptGroup> promptwise_;
    std::vector<RolloutGroup> groups_;
    std::vector<PairSample> samples_;
};

}  // namespace

void Environment::validate() const {
    if (!space) throw PreconditionError("environment has no response space");
    if (prompts.size() != space->num_prompts()) throw ShapeError("prompt distribution size mismatch");
    if (levels.size() != space->num_prompts()) throw ShapeError("level table prompt count mismatch");
    for (std::size_t x = 0; x < levels.size(); ++x) {
        if (levels[x].size() != space->num_responses(x)) throw ShapeError("level table width mismatch");
    }
    if (rewards && !(rewards->space() == *space)) throw ShapeError("reward table space mismatch");
    if (!(reference.space() == *space) || !(initial.space() == *space)) {
        throw ShapeError("reference and initial policy must live on the environment space");
    }
}

Environment Environment::bandit() {
    auto space = std::make_shared<const Space>(std::vector<std::string>{"bandit"},
                                               std::vector<std::vector<std::string>>{
                                                   {"correct", "wrong-answer", "bad-format"}});
    LevelTable levels{{PreferenceLevel::correct, PreferenceLevel::wrong, PreferenceLevel::bad_format}};
    RewardTable rewards(space, RaggedTable(std::vector<std::vector<double>>{{1.0, 0.0, -1.0}}));
    auto ref = Policy::uniform(space);
    return Environment{space, PromptDist::uniform(1), std::move(levels), std::move(rewards), ref, ref};
}

Algorithm algorithm_from_string(std::string_view name) {
    if (name == "trpa") return Algorithm::trpa;
    if (name == "grpo") return Algorithm::grpo;
    if (name == "online-dpo") return Algorithm::online_dpo;
    if (name == "pa") return Algorithm::pa;
    throw DomainError("unknown algorithm '" + std::string(name) + "'");
}

std::string to_string(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::trpa: return "trpa";
        case Algorithm::grpo: return "grpo";
        case Algorithm::online_dpo: return "online-dpo";
        case Algorithm::pa: return "pa";
    }
    return "unknown";
}

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw DomainError("lr must be positive");
    if (batch_prompts == 0) throw DomainError("batch_prompts must be positive");
    if (rollouts_per_prompt < 2) throw DomainError("rollouts_per_prompt must be at least 2");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw DomainError("temperature must be positive");
    if (snapshot_every == 0) throw DomainError("snapshot_every must be positive");
    if (inner_steps == 0) throw DomainError("inner_steps must be positive");
    trpa.validate();
    if (!(grpo.clip_eps > 0.0 && grpo.clip_eps < 1.0)) throw DomainError("clip_eps must lie in (0, 1)");
    if (!(grpo.beta_kl >= 0.0)) throw DomainError("beta_kl must be non-negative");
    if (algorithm == Algorithm::grpo && trpa.mode == EvalMode::exact) {
        throw DomainError("grpo needs sampled mode");
    }
    if (algorithm == Algorithm::pa && trpa.mode == EvalMode::sampled) {
        throw DomainError("pa needs exact mode");
    }
}

std::vector<std::size_t> sample_responses(const Policy& old_policy, std::size_t x, std::size_t g, double temperature,
                                          Rng& rng) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw DomainError("temperature must be positive");
    const auto logits = old_policy.logits().row(x);
    std::vector<double> scaled(logits.begin(), logits.end());
    for (double& v : scaled) v /= temperature;
    std::vector<double> probs(scaled.size());
    log_softmax(scaled, probs);
    for (double& v : probs) v = std::exp(v);
    std::vector<std::size_t> out(g);
    for (auto& y : out) y = sample_index(probs, rng);
    return out;
}

std::vector<RolloutBatch> rollout(const Policy& old_policy, const PromptDist& prompts, std::size_t batch_prompts,
                                  std::size_t g, double temperature, Rng& rng) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw DomainError("temperature must be positive");
    if (g < 2) throw DomainError("rollout needs at least two responses per prompt");
    if (prompts.size() != old_policy.space().num_prompts()) throw ShapeError("prompt distribution size mismatch");
    std::vector<RolloutBatch> out;
    out.reserve(batch_prompts);
    for (std::size_t b = 0; b < batch_prompts; ++b) {
        const std::size_t x = sample_index(prompts.categorical().probs(), rng);
        out.push_back({x, sample_responses(old_policy, x, g, temperature, rng)});
    }
    return out;
}

LogitRatioMeans logit_ratio_metrics(const Policy& theta, const Policy& ref, std::span<const PreferencePair> pairs,
                                    std::span<const double> weights) {
    require_compatible(theta, ref);
    if (pairs.empty()) throw DomainError("logit-ratio metrics need at least one pair");
    if (!weights.empty() && weights.size() != pairs.size()) throw ShapeError("weights length mismatch");
    LogitRatioMeans m;
    double total = 0.0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const double w = weights.empty() ? 1.0 : weights[k];
        m.winner += w * log_ratio(theta, ref, pairs[k].prompt, pairs[k].y1);
        m.loser += w * log_ratio(theta, ref, pairs[k].prompt, pairs[k].y2);
        total += w;
    }
    if (!(total > 0.0)) throw DomainError("weights sum to zero");
    m.winner /= total;
    m.loser /= total;
    return m;
}

double level1_mass(const Policy& policy, const Environment& env) {
    double acc = 0.0;
    for (std::size_t x = 0; x < env.levels.size(); ++x) {
        double mass = 0.0;
        for (std::size_t y = 0; y < env.levels[x].size(); ++y) {
            if (env.levels[x][y] == PreferenceLevel::correct) mass += policy.prob(x, y);
        }
        acc += env.prompts.weight(x) * mass;
    }
    return acc;
}

TrainResult train(const Environment& env, const TrainConfig& cfg) {
    env.validate();
    cfg.validate();
    if ((cfg.algorithm == Algorithm::online_dpo || cfg.algorithm == Algorithm::pa) && !env.rewards) {
        throw PreconditionError(to_string(cfg.algorithm) + " needs an environment with rewards");
    }
    TrainResult result{{}, env.initial, false, 0, {}, {}};
    Policy theta = env.initial;
    Policy old_policy = env.initial;
    Rng rng(cfg.seed);
    const bool exact = cfg.trpa.mode == EvalMode::exact;
    std::optional<PreferenceModel> bt;
    if (env.rewards) bt = PreferenceModel::bradley_terry(*env.rewards);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        if (step % cfg.snapshot_every == 0) old_policy = theta;
        result.old_fingerprints.push_back(old_policy.fingerprint());
        std::vector<RolloutBatch> batch;
        if (!exact) {
            batch = rollout(old_policy, env.prompts, cfg.batch_prompts, cfg.rollouts_per_prompt, cfg.temperature,
                            rng);
        }
        const StepObjective objective(env, cfg, old_policy, batch);
        const Policy before = theta;
        double first_loss = 0.0;
        auto diverge = [&](double loss, const std::string& what) {
            result.diverged = true;
            result.diverged_at = step;
            std::ostringstream msg;
            msg << what << " at step " << step << " (loss=" << loss << ")";
            result.diagnostic = msg.str();
            result.records.push_back({step, loss, kNaN, kNaN, kNaN, kNaN, kNaN});
            result.final_policy = theta;
        };
        for (std::size_t inner = 0; inner < cfg.inner_steps; ++inner) {
            LossValue l;
            try {
                l = objective(theta);
            } catch (const DomainError& e) {
                // Inputs were validated up front, so a domain failure here
                // comes from saturated or overflowing probabilities.
                diverge(kNaN, std::string("numerical failure: ") + e.what());
                return result;
            }
            if (inner == 0) first_loss = l.value;
            RaggedTable next = theta.logits();
            next.axpy(-cfg.lr, l.grad);
            const auto flat = next.flat();
            const bool finite_step = std::all_of(flat.begin(), flat.end(), [](double v) { return std::isfinite(v); });
            if (!all_finite(l) || !finite_step) {
                diverge(l.value, finite_step ? "non-finite loss or gradient" : "logits overflowed");
                return result;
            }
            theta = Policy(theta.space_ptr(), std::move(next));
        }

        TrainRecord rec;
        rec.step = step;
        rec.loss = first_loss;
        if (exact) {
            rec.accuracy = level1_mass(theta, env);
        } else {
            std::size_t hits = 0;
            std::size_t total = 0;
            for (const auto& rb : batch) {
                for (std::size_t y : rb.responses) {
                    hits += env.levels[rb.prompt][y] == PreferenceLevel::correct ? 1 : 0;
                    ++total;
                }
            }
            rec.accuracy = static_cast<double>(hits) / static_cast<double>(total);
        }
        try {
            rec.entropy = entropy_mean(theta, env.prompts);
            const auto dist = exact_pair_distribution(old_policy, env.prompts, env.levels);
            if (dist.pairs.empty()) {
                rec.winner_logratio = kNaN;
                rec.loser_logratio = kNaN;
            } else {
                const auto m = logit_ratio_metrics(theta, env.reference, dist.pairs, dist.weights);
                rec.winner_logratio = m.winner;
                rec.loser_logratio = m.loser;
            }
            rec.bound_slack = kNaN;
            if (exact && bt) {
                rec.bound_slack =
                    monotonic_bound(before, theta, env.reference, env.prompts, *bt, cfg.trpa.ktpo.beta).slack();
            }
        } catch (const DomainError& e) {
            diverge(first_loss, std::string("numerical failure in step metrics: ") + e.what());
            return result;
        }
        result.records.push_back(rec);
    }
    result.final_policy = theta;
    return result;
}

}  // namespace trpa
