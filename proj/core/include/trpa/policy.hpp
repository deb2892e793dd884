#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "trpa/distmath.hpp"
#include "trpa/table.hpp"

namespace trpa {

/// Finite prompt set with a per-prompt response set. Each prompt needs at
/// least two responses so that a pairwise comparison exists.
class Space {
public:
    Space(std::vector<std::string> prompts, std::vector<std::vector<std::string>> responses);

    /// Prompts named "x0", "x1", ... with responses "y0", "y1", ...
    static std::shared_ptr<const Space> anonymous(std::span<const std::size_t> widths);

    std::size_t num_prompts() const noexcept { return prompts_.size(); }
    std::size_t num_responses(std::size_t x) const { return responses_.at(x).size(); }
    std::vector<std::size_t> widths() const;

    const std::string& prompt_id(std::size_t x) const { return prompts_.at(x); }
    const std::string& response_id(std::size_t x, std::size_t y) const { return responses_.at(x).at(y); }
    const std::vector<std::string>& prompts() const noexcept { return prompts_; }
    const std::vector<std::string>& responses(std::size_t x) const { return responses_.at(x); }

    /// Throw LookupError for unknown identifiers.
    std::size_t prompt_index(std::string_view id) const;
    std::size_t response_index(std::size_t x, std::string_view id) const;

    friend bool operator==(const Space&, const Space&) = default;

private:
    std::vector<std::string> prompts_;
    std::vector<std::vector<std::string>> responses_;
};

using SpacePtr = std::shared_ptr<const Space>;

/// Prompt distribution D over the prompts of a space.
class PromptDist {
public:
    explicit PromptDist(Categorical weights) : weights_(std::move(weights)) {}
    static PromptDist uniform(std::size_t num_prompts) { return PromptDist(Categorical::uniform(num_prompts)); }

    double weight(std::size_t x) const { return weights_.probs()[x]; }
    std::size_t size() const noexcept { return weights_.size(); }
    const Categorical& categorical() const noexcept { return weights_; }

private:
    Categorical weights_;
};

/// Tabular softmax policy: one logit per (prompt, response). Immutable once
/// built; log-probabilities and probabilities are cached at construction.
class Policy {
public:
    Policy(SpacePtr space, RaggedTable logits);

    static Policy uniform(SpacePtr space);

    const Space& space() const noexcept { return *space_; }
    const SpacePtr& space_ptr() const noexcept { return space_; }
    const RaggedTable& logits() const noexcept { return logits_; }
    const RaggedTable& log_probs() const noexcept { return log_probs_; }
    const RaggedTable& probs() const noexcept { return probs_; }

    double prob(std::size_t x, std::size_t y) const { return probs_.at(x, y); }
    double log_prob(std::size_t x, std::size_t y) const { return log_probs_.at(x, y); }
    double prob(std::string_view prompt, std::string_view response) const;
    std::span<const double> row(std::size_t x) const { return probs_.row(x); }
    Categorical conditional(std::size_t x) const;

    /// Same space shape (prompt count and per-prompt widths).
    bool compatible(const Policy& other) const noexcept;
    /// FNV-1a over the logit bytes; used to assert snapshot immutability.
    std::uint64_t fingerprint() const noexcept;

    /// New policy with logits + alpha * direction.
    Policy stepped(double alpha, const RaggedTable& direction) const;

private:
    SpacePtr space_;
    RaggedTable logits_;
    RaggedTable log_probs_;
    RaggedTable probs_;
};

/// Scalar reward r(x, y) per (prompt, response).
class RewardTable {
public:
    RewardTable(SpacePtr space, RaggedTable values);

    const Space& space() const noexcept { return *space_; }
    const SpacePtr& space_ptr() const noexcept { return space_; }
    const RaggedTable& values() const noexcept { return values_; }
    double at(std::size_t x, std::size_t y) const { return values_.at(x, y); }

private:
    SpacePtr space_;
    RaggedTable values_;
};

void require_compatible(const Policy& a, const Policy& b);

/// pi_bar(y|x) = pi_ref(y|x) exp(r(x,y)/beta) / Z(x), materialised with
/// log-probabilities as logits. Throws DomainError unless beta > 0.
Policy target_distribution(const Policy& ref, const RewardTable& rewards, double beta);

double kl_at(const Policy& p, const Policy& q, std::size_t x);
double tv_at(const Policy& p, const Policy& q, std::size_t x);
/// max_x KL(old(.|x) || new(.|x)).
double kl_max(const Policy& old_policy, const Policy& new_policy);
/// max_x TV(a(.|x), b(.|x)).
double tv_max(const Policy& a, const Policy& b);
/// Prompt-weighted mean Shannon entropy of the conditional rows.
double entropy_mean(const Policy& policy, const PromptDist& prompts);

}  // namespace trpa
