#include "trpa/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "trpa/errors.hpp"

namespace trpa {
namespace {

double xlogy(double x, double y) {
    if (x == 0.0) return 0.0;
    return x * std::log(y);
}

void require_positive_beta(double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw DomainError("beta must be positive and finite");
}

void require_prompt_space(const Policy& theta, const PromptDist& prompts) {
    if (prompts.size() != theta.space().num_prompts()) {
        throw ShapeError("prompt distribution has " + std::to_string(prompts.size()) + " entries, policy has " +
                         std::to_string(theta.space().num_prompts()) + " prompts");
    }
}

void require_pair(const Policy& theta, std::size_t x, std::size_t y1, std::size_t y2) {
    if (x >= theta.space().num_prompts()) throw LookupError("pair prompt index out of range");
    const std::size_t w = theta.space().num_responses(x);
    if (y1 >= w || y2 >= w) throw LookupError("pair response index out of range");
}

// Converts every row of a log-prob gradient in place.
void convert_rows(const Policy& theta, RaggedTable& grad) {
    for (std::size_t x = 0; x < grad.rows(); ++x) logprob_to_logit_grad(theta.row(x), grad.row(x));
}

// Pair cross-entropy -p log s(h) - (1-p) log s(-h) with the complement passed
// separately so that p near 1 keeps its precision.
double pair_cross_entropy(double p1, double p0, double h) {
    double out = 0.0;
    if (p1 > 0.0) out -= p1 * log_sigmoid(h);
    if (p0 > 0.0) out -= p0 * log_sigmoid(-h);
    return out;
}

double pair_kl(double p1, double p0, double h) {
    const double value = xlogy(p1, p1) + xlogy(p0, p0) + pair_cross_entropy(p1, p0, h);
    return std::max(0.0, value);
}

// Preference probability and its complement. For Bradley-Terry the complement
// is the reversed comparison, which is computed without cancellation.
std::pair<double, double> pref_pair(const PreferenceModel& pref, std::size_t x, std::size_t i, std::size_t j) {
    if (i == j) return {0.5, 0.5};
    return {pref.p1(x, i, j), pref.p1(x, j, i)};
}

std::vector<double> row_log_ratios(const Policy& theta, const Policy& ref, std::size_t x) {
    const std::size_t w = theta.space().num_responses(x);
    std::vector<double> lr(w);
    for (std::size_t y = 0; y < w; ++y) lr[y] = theta.log_prob(x, y) - ref.log_prob(x, y);
    return lr;
}

void check_weights(std::span<const double> weights, std::size_t n) {
    if (weights.empty()) return;
    if (weights.size() != n) throw ShapeError("weights length does not match number of pairs");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("pair weights must be finite and non-negative");
        total += w;
    }
    if (!(total > 0.0)) throw DomainError("pair weights sum to zero");
}

}  // namespace

void logprob_to_logit_grad(std::span<const double> probs, std::span<double> grad) {
    if (probs.size() != grad.size()) throw ShapeError("gradient row width mismatch");
    double sum = 0.0;
    for (double g : grad) sum += g;
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] -= probs[k] * sum;
}

void TrpaConfig::validate() const {
    ktpo.validate();
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be finite and non-negative");
}

LossValue dpo_loss(const Policy& theta, const Policy& ref, std::span<const PairSample> dataset, double beta) {
    require_compatible(theta, ref);
    require_positive_beta(beta);
    if (dataset.empty()) throw DomainError("DPO loss over an empty dataset");
    LossValue out{0.0, theta.logits().zeros_like()};
    double total_weight = 0.0;
    for (const auto& s : dataset) {
        if (!(s.weight >= 0.0)) throw DomainError("sample weight must be non-negative");
        total_weight += s.weight;
    }
    if (!(total_weight > 0.0)) throw DomainError("sample weights sum to zero");
    for (const auto& s : dataset) {
        const auto& p = s.pair;
        require_pair(theta, p.prompt, p.y1, p.y2);
        const std::size_t win = s.y1_wins ? p.y1 : p.y2;
        const std::size_t lose = s.y1_wins ? p.y2 : p.y1;
        const double h = beta * (log_ratio(theta, ref, p.prompt, win) - log_ratio(theta, ref, p.prompt, lose));
        const double w = s.weight / total_weight;
        out.value -= w * log_sigmoid(h);
        const double dh = -w * sigmoid(-h) * beta;
        out.grad.at(p.prompt, win) += dh;
        out.grad.at(p.prompt, lose) -= dh;
    }
    convert_rows(theta, out.grad);
    return out;
}

RaggedTable OnlineEvaluation::total() const {
    RaggedTable t = score;
    t.axpy(1.0, direct);
    return t;
}

OnlineEvaluation evaluate_online(const Policy& theta, const Policy& ref, const PromptDist& prompts,
                                 const PreferenceModel& pref, double beta, OnlineObjective objective) {
    require_compatible(theta, ref);
    require_prompt_space(theta, prompts);
    require_positive_beta(beta);
    if (!pref.is_smooth()) {
        throw PreconditionError("exact on-policy objectives need a smooth preference model over every pair");
    }
    OnlineEvaluation out{0.0, theta.logits().zeros_like(), theta.logits().zeros_like()};
    for (std::size_t x = 0; x < theta.space().num_prompts(); ++x) {
        const double dx = prompts.weight(x);
        if (dx == 0.0) continue;
        const auto pi = theta.row(x);
        const auto lr = row_log_ratios(theta, ref, x);
        const std::size_t w = pi.size();
        auto score = out.score.row(x);
        auto direct = out.direct.row(x);
        for (std::size_t i = 0; i < w; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const auto [p1, p0] = pref_pair(pref, x, i, j);
                const double h = beta * (lr[i] - lr[j]);
                const double f =
                    objective == OnlineObjective::kl ? pair_kl(p1, p0, h) : pair_cross_entropy(p1, p0, h);
                const double wij = pi[i] * pi[j];
                out.value += dx * wij * f;
                // d(pi_i pi_j)/d log pi_k = wij ([k=i] + [k=j])
                score[i] += dx * wij * f;
                score[j] += dx * wij * f;
                const double g = sigmoid(h) - p1;
                direct[i] += dx * wij * beta * g;
                direct[j] -= dx * wij * beta * g;
            }
        }
        logprob_to_logit_grad(pi, score);
        logprob_to_logit_grad(pi, direct);
    }
    return out;
}

LossValue online_dpo_loss(const Policy& theta, const Policy& ref, const PromptDist& prompts,
                          const PreferenceModel& pref, double beta) {
    auto ev = evaluate_online(theta, ref, prompts, pref, beta, OnlineObjective::cross_entropy);
    return {ev.value, ev.total()};
}

LossValue pa_loss(const Policy& theta, const Policy& ref, const PromptDist& prompts, const PreferenceModel& pref,
                  double beta) {
    auto ev = evaluate_online(theta, ref, prompts, pref, beta, OnlineObjective::kl);
    return {ev.value, ev.total()};
}

double expected_preference_entropy(const Policy& theta, const PromptDist& prompts, const PreferenceModel& pref) {
    require_prompt_space(theta, prompts);
    if (!pref.is_smooth()) throw PreconditionError("preference entropy needs a smooth preference model");
    double out = 0.0;
    for (std::size_t x = 0; x < theta.space().num_prompts(); ++x) {
        const auto pi = theta.row(x);
        for (std::size_t i = 0; i < pi.size(); ++i) {
            for (std::size_t j = 0; j < pi.size(); ++j) {
                const auto [p1, p0] = pref_pair(pref, x, i, j);
                out += prompts.weight(x) * pi[i] * pi[j] * -(xlogy(p1, p1) + xlogy(p0, p0));
            }
        }
    }
    return out;
}

LossValue trust_region_penalty(const Policy& theta, const Policy& old_policy, const PromptDist& prompts,
                               double lambda) {
    require_compatible(theta, old_policy);
    require_prompt_space(theta, prompts);
    if (!(lambda >= 0.0)) throw DomainError("lambda must be non-negative");
    LossValue out{0.0, theta.logits().zeros_like()};
    if (lambda == 0.0) return out;
    for (std::size_t x = 0; x < theta.space().num_prompts(); ++x) {
        const double dx = prompts.weight(x);
        out.value += lambda * dx * kl_at(old_policy, theta, x);
        const auto pi = theta.row(x);
        const auto old = old_policy.row(x);
        auto g = out.grad.row(x);
        for (std::size_t k = 0; k < pi.size(); ++k) g[k] = lambda * dx * (pi[k] - old[k]);
    }
    return out;
}

LossValue trpa_loss(const Policy& theta, const Policy& ref, const Policy& old_policy, const PromptDist& prompts,
                    std::span<const PreferencePair> pairs, const TrpaConfig& cfg, std::span<const double> weights) {
    require_compatible(theta, ref);
    require_compatible(theta, old_policy);
    cfg.validate();
    if (pairs.empty() && cfg.lambda == 0.0) {
        throw DomainError("TRPA loss with no pairs and no trust-region term is undefined");
    }
    check_weights(weights, pairs.size());
    LossValue out{0.0, theta.logits().zeros_like()};
    if (!pairs.empty()) {
        double total = 0.0;
        for (std::size_t k = 0; k < pairs.size(); ++k) total += weights.empty() ? 1.0 : weights[k];
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto& p = pairs[k];
            require_pair(theta, p.prompt, p.y1, p.y2);
            if (!is_better(p.level1, p.level2)) {
                throw PreconditionError("TRPA pair must place the better-level response first");
            }
            const double b = ktpo_beta(cfg.ktpo, p.level1);
            const double h =
                b * (log_ratio(theta, ref, p.prompt, p.y1) - log_ratio(theta, ref, p.prompt, p.y2));
            const double w = (weights.empty() ? 1.0 : weights[k]) / total;
            out.value -= w * log_sigmoid(h);
            const double dh = -w * b * sigmoid(-h);
            out.grad.at(p.prompt, p.y1) += dh;
            out.grad.at(p.prompt, p.y2) -= dh;
        }
        convert_rows(theta, out.grad);
    }
    if (cfg.lambda > 0.0) {
        const auto reg = trust_region_penalty(theta, old_policy, prompts, cfg.lambda);
        out.value += reg.value;
        out.grad.axpy(1.0, reg.grad);
    }
    return out;
}

WeightedPairs exact_pair_distribution(const Policy& old_policy, const PromptDist& prompts, const LevelTable& levels) {
    require_prompt_space(old_policy, prompts);
    if (levels.size() != old_policy.space().num_prompts()) throw ShapeError("level table prompt count mismatch");
    WeightedPairs out;
    for (std::size_t x = 0; x < levels.size(); ++x) {
        if (levels[x].size() != old_policy.space().num_responses(x)) {
            throw ShapeError("level table width mismatch at prompt " + std::to_string(x));
        }
        for (const auto& pair : build_pairs(x, levels[x])) {
            const double w = prompts.weight(x) * 2.0 * old_policy.prob(x, pair.y1) * old_policy.prob(x, pair.y2);
            if (w <= 0.0) continue;
            out.pairs.push_back(pair);
            out.weights.push_back(w);
        }
    }
    return out;
}

LossValue promptwise_loss(const Policy& theta, const Policy& ref, const PromptGroup& group, const TrpaConfig& cfg) {
    require_compatible(theta, ref);
    cfg.validate();
    if (group.responses.empty()) throw DomainError("prompt-wise loss over an empty group");
    const bool up = group.level == PreferenceLevel::correct;
    const double b = up ? ktpo_beta(cfg.ktpo, group.level) : cfg.ktpo.beta;
    const double sign = up ? 1.0 : -1.0;
    const double n = static_cast<double>(group.responses.size());
    LossValue out{0.0, theta.logits().zeros_like()};
    for (std::size_t y : group.responses) {
        require_pair(theta, group.prompt, y, y);
        const double s = sign * b * log_ratio(theta, ref, group.prompt, y);
        out.value -= log_sigmoid(s) / n;
        out.grad.at(group.prompt, y) -= sign * b * sigmoid(-s) / n;
    }
    logprob_to_logit_grad(theta.row(group.prompt), out.grad.row(group.prompt));
    return out;
}

std::vector<double> group_advantages(std::span<const double> rewards) {
    if (rewards.size() < 2) throw DomainError("group advantages need at least two rollouts");
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) {
        if (!std::isfinite(r)) throw DomainError("rewards must be finite");
        mean += r;
    }
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> adv(rewards.size(), 0.0);
    if (sd < kAdvantageStdFloor) return adv;
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
    return adv;
}

LossValue grpo_loss(const Policy& theta, const Policy& old_policy, const Policy& ref,
                    std::span<const RolloutGroup> groups, double clip_eps, double beta_kl) {
    require_compatible(theta, old_policy);
    require_compatible(theta, ref);
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw DomainError("clip epsilon must lie in (0, 1)");
    if (!(beta_kl >= 0.0)) throw DomainError("KL coefficient must be non-negative");
    if (groups.empty()) throw DomainError("GRPO loss over no groups");
    LossValue out{0.0, theta.logits().zeros_like()};
    RaggedTable lp_grad = theta.logits().zeros_like();
    const double ng = static_cast<double>(groups.size());
    for (const auto& g : groups) {
        if (g.responses.size() < 2) throw DomainError("GRPO group needs at least two rollouts");
        if (g.rewards.size() != g.responses.size()) throw ShapeError("rewards and responses differ in length");
        const auto adv = group_advantages(g.rewards);
        const double gs = static_cast<double>(g.responses.size());
        double surrogate = 0.0;
        for (std::size_t i = 0; i < g.responses.size(); ++i) {
            const std::size_t y = g.responses[i];
            require_pair(theta, g.prompt, y, y);
            const double rho = std::exp(theta.log_prob(g.prompt, y) - old_policy.log_prob(g.prompt, y));
            const double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps);
            const double a = adv[i];
            const double raw = rho * a;
            const double cut = clipped * a;
            if (raw <= cut) {
                surrogate += raw / gs;
                lp_grad.at(g.prompt, y) -= rho * a / (gs * ng);
            } else {
                surrogate += cut / gs;
            }
        }
        out.value -= surrogate / ng;
        if (beta_kl > 0.0) {
            const double k = kl_at(theta, ref, g.prompt);
            out.value += beta_kl * k / ng;
            const auto pi = theta.row(g.prompt);
            auto row = out.grad.row(g.prompt);
            for (std::size_t y = 0; y < pi.size(); ++y) {
                const double lr = theta.log_prob(g.prompt, y) - ref.log_prob(g.prompt, y);
                row[y] += beta_kl * pi[y] * (lr - k) / ng;
            }
        }
    }
    convert_rows(theta, lp_grad);
    out.grad.axpy(1.0, lp_grad);
    return out;
}

double theorem_surrogate(const Policy& new_policy, const Policy& old_policy, const Policy& ref,
                         const PromptDist& prompts, const PreferenceModel& pref, double beta) {
    require_compatible(new_policy, old_policy);
    require_compatible(new_policy, ref);
    require_prompt_space(new_policy, prompts);
    require_positive_beta(beta);
    if (!pref.is_smooth()) throw PreconditionError("surrogate needs a smooth preference model");
    double ce = 0.0;
    double m = 0.0;
    for (std::size_t x = 0; x < new_policy.space().num_prompts(); ++x) {
        const auto old = old_policy.row(x);
        const auto lr = row_log_ratios(new_policy, ref, x);
        for (std::size_t i = 0; i < old.size(); ++i) {
            for (std::size_t j = 0; j < old.size(); ++j) {
                const double w = prompts.weight(x) * old[i] * old[j];
                if (w == 0.0) continue;
                const auto [p1, p0] = pref_pair(pref, x, i, j);
                ce += w * pair_cross_entropy(p1, p0, beta * (lr[i] - lr[j]));
                m += w * (xlogy(p1, p1) + xlogy(p0, p0));
            }
        }
    }
    return std::max(0.0, ce + m);
}

double max_preference_kl(const Policy& new_policy, const Policy& ref, const PreferenceModel& pref, double beta) {
    require_compatible(new_policy, ref);
    require_positive_beta(beta);
    if (!pref.is_smooth()) throw PreconditionError("preference KL bound needs a smooth preference model");
    double best = 0.0;
    for (std::size_t x = 0; x < new_policy.space().num_prompts(); ++x) {
        const auto lr = row_log_ratios(new_policy, ref, x);
        for (std::size_t i = 0; i < lr.size(); ++i) {
            for (std::size_t j = 0; j < lr.size(); ++j) {
                const auto [p1, p0] = pref_pair(pref, x, i, j);
                best = std::max(best, pair_kl(p1, p0, beta * (lr[i] - lr[j])));
            }
        }
    }
    return best;
}

double bound_coefficient(double max_pref_kl) { return 4.0 * (max_pref_kl + 2.0 * std::numbers::ln2); }

BoundCheck monotonic_bound(const Policy& old_policy, const Policy& new_policy, const Policy& ref,
                           const PromptDist& prompts, const PreferenceModel& pref, double beta) {
    BoundCheck b;
    b.lhs = theorem_surrogate(new_policy, new_policy, ref, prompts, pref, beta);
    b.surrogate = theorem_surrogate(new_policy, old_policy, ref, prompts, pref, beta);
    b.max_pref_kl = max_preference_kl(new_policy, ref, pref, beta);
    b.a1 = bound_coefficient(b.max_pref_kl);
    b.kl_max = kl_max(old_policy, new_policy);
    b.rhs = b.surrogate + b.a1 * std::sqrt(b.kl_max);
    return b;
}

namespace {

MonteCarloEstimate summarize(double sum, double sum_sq, std::size_t n) {
    MonteCarloEstimate e;
    e.samples = n;
    const double dn = static_cast<double>(n);
    e.mean = sum / dn;
    const double var = n > 1 ? std::max(0.0, (sum_sq - dn * e.mean * e.mean) / (dn - 1.0)) : 0.0;
    e.std_error = std::sqrt(var / dn);
    return e;
}

}  // namespace

MonteCarloEstimate sample_online_loss(const Policy& theta, const Policy& ref, const PromptDist& prompts,
                                      const PreferenceModel& pref, double beta, OnlineObjective objective,
                                      std::size_t samples, Rng& rng) {
    require_compatible(theta, ref);
    require_prompt_space(theta, prompts);
    require_positive_beta(beta);
    if (!pref.is_smooth()) throw PreconditionError("sampling the on-policy objective needs a smooth model");
    if (samples == 0) throw DomainError("need at least one sample");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t x = sample_index(prompts.categorical().probs(), rng);
        const std::size_t i = sample_index(theta.row(x), rng);
        const std::size_t j = sample_index(theta.row(x), rng);
        const auto [p1, p0] = pref_pair(pref, x, i, j);
        const double h = beta * (log_ratio(theta, ref, x, i) - log_ratio(theta, ref, x, j));
        const bool y1_wins = coin(rng) < p1;
        double v = -log_sigmoid(y1_wins ? h : -h);
        if (objective == OnlineObjective::kl) v += xlogy(p1, p1) + xlogy(p0, p0);
        sum += v;
        sum_sq += v * v;
    }
    return summarize(sum, sum_sq, samples);
}

MonteCarloEstimate sample_trpa_pair_loss(const Policy& theta, const Policy& ref, const Policy& old_policy,
                                         const PromptDist& prompts, const LevelTable& levels, const TrpaConfig& cfg,
                                         std::size_t samples, Rng& rng) {
    require_compatible(theta, ref);
    require_compatible(theta, old_policy);
    cfg.validate();
    if (samples == 0) throw DomainError("need at least one sample");
    const auto support = exact_pair_distribution(old_policy, prompts, levels);
    if (support.pairs.empty()) throw DomainError("no distinct-level pair has positive probability");
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t kept = 0;
    // Rejection sampling keeps the draw literal: x ~ D, y1, y2 ~ pi_old, retry on ties.
    const std::size_t max_draws = samples * 1000;
    for (std::size_t draws = 0; kept < samples && draws < max_draws; ++draws) {
        const std::size_t x = sample_index(prompts.categorical().probs(), rng);
        std::size_t i = sample_index(old_policy.row(x), rng);
        std::size_t j = sample_index(old_policy.row(x), rng);
        if (levels[x][i] == levels[x][j]) continue;
        if (is_better(levels[x][j], levels[x][i])) std::swap(i, j);
        const double b = ktpo_beta(cfg.ktpo, levels[x][i]);
        const double v = -log_sigmoid(b * (log_ratio(theta, ref, x, i) - log_ratio(theta, ref, x, j)));
        sum += v;
        sum_sq += v * v;
        ++kept;
    }
    if (kept < samples) throw DomainError("distinct-level pairs are too rare to sample");
    return summarize(sum, sum_sq, samples);
}

}  // namespace trpa
