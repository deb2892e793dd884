#include "trpa/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "trpa/errors.hpp"

namespace trpa {

Space::Space(std::vector<std::string> prompts, std::vector<std::vector<std::string>> responses)
    : prompts_(std::move(prompts)), responses_(std::move(responses)) {
    if (prompts_.empty()) throw DomainError("space needs at least one prompt");
    if (prompts_.size() != responses_.size()) {
        throw ShapeError("space has " + std::to_string(prompts_.size()) + " prompts but " +
                         std::to_string(responses_.size()) + " response lists");
    }
    for (std::size_t x = 0; x < prompts_.size(); ++x) {
        if (responses_[x].size() < 2) {
            throw DomainError("prompt '" + prompts_[x] + "' needs at least two responses");
        }
    }
}

std::shared_ptr<const Space> Space::anonymous(std::span<const std::size_t> widths) {
    std::vector<std::string> prompts;
    std::vector<std::vector<std::string>> responses;
    for (std::size_t x = 0; x < widths.size(); ++x) {
        prompts.push_back("x" + std::to_string(x));
        auto& row = responses.emplace_back();
        for (std::size_t y = 0; y < widths[x]; ++y) row.push_back("y" + std::to_string(y));
    }
    return std::make_shared<const Space>(std::move(prompts), std::move(responses));
}

std::vector<std::size_t> Space::widths() const {
    std::vector<std::size_t> w;
    for (const auto& r : responses_) w.push_back(r.size());
    return w;
}

std::size_t Space::prompt_index(std::string_view id) const {
    auto it = std::find(prompts_.begin(), prompts_.end(), id);
    if (it == prompts_.end()) throw LookupError("unknown prompt '" + std::string(id) + "'");
    return static_cast<std::size_t>(it - prompts_.begin());
}

std::size_t Space::response_index(std::size_t x, std::string_view id) const {
    const auto& row = responses_.at(x);
    auto it = std::find(row.begin(), row.end(), id);
    if (it == row.end()) {
        throw LookupError("unknown response '" + std::string(id) + "' for prompt '" + prompts_[x] + "'");
    }
    return static_cast<std::size_t>(it - row.begin());
}

Policy::Policy(SpacePtr space, RaggedTable logits) : space_(std::move(space)), logits_(std::move(logits)) {
    if (!space_) throw DomainError("policy without a space");
    if (logits_.widths() != space_->widths()) throw ShapeError("logit table does not match the space");
    for (double v : logits_.flat()) {
        if (!std::isfinite(v)) throw DomainError("policy logits must be finite");
    }
    log_probs_ = logits_.zeros_like();
    probs_ = logits_.zeros_like();
    for (std::size_t x = 0; x < logits_.rows(); ++x) {
        auto lp = log_probs_.row(x);
        log_softmax(logits_.row(x), lp);
        auto p = probs_.row(x);
        for (std::size_t y = 0; y < lp.size(); ++y) p[y] = std::exp(lp[y]);
    }
}

Policy Policy::uniform(SpacePtr space) {
    const auto w = space->widths();
    return Policy(std::move(space), RaggedTable(std::span<const std::size_t>(w)));
}

double Policy::prob(std::string_view prompt, std::string_view response) const {
    const std::size_t x = space_->prompt_index(prompt);
    return prob(x, space_->response_index(x, response));
}

Categorical Policy::conditional(std::size_t x) const {
    auto r = probs_.row(x);
    return Categorical(std::vector<double>(r.begin(), r.end()));
}

bool Policy::compatible(const Policy& other) const noexcept { return logits_.same_shape(other.logits_); }

std::uint64_t Policy::fingerprint() const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (double v : logits_.flat()) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

Policy Policy::stepped(double alpha, const RaggedTable& direction) const {
    RaggedTable next = logits_;
    next.axpy(alpha, direction);
    return Policy(space_, std::move(next));
}

RewardTable::RewardTable(SpacePtr space, RaggedTable values) : space_(std::move(space)), values_(std::move(values)) {
    if (!space_) throw DomainError("reward table without a space");
    if (values_.widths() != space_->widths()) throw ShapeError("reward table does not match the space");
    for (double v : values_.flat()) {
        if (!std::isfinite(v)) throw DomainError("rewards must be finite");
    }
}

void require_compatible(const Policy& a, const Policy& b) {
    if (!a.compatible(b)) throw ShapeError("policies are defined over different spaces");
}

Policy target_distribution(const Policy& ref, const RewardTable& rewards, double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw DomainError("target_distribution needs beta > 0");
    if (ref.logits().widths() != rewards.values().widths()) {
        throw ShapeError("reward table does not match the reference policy");
    }
    RaggedTable logits = ref.logits().zeros_like();
    for (std::size_t x = 0; x < logits.rows(); ++x) {
        auto out = logits.row(x);
        auto lref = ref.log_probs().row(x);
        auto r = rewards.values().row(x);
        for (std::size_t y = 0; y < out.size(); ++y) out[y] = lref[y] + r[y] / beta;
        // Normalise in log space so the stored logits are exact log-probabilities.
        const double lse = log_sum_exp(out);
        for (double& v : out) v -= lse;
    }
    return Policy(ref.space_ptr(), std::move(logits));
}

double kl_at(const Policy& p, const Policy& q, std::size_t x) {
    // Log-probabilities are exact for softmax rows, so no 0/0 cases arise here.
    auto pr = p.row(x);
    auto lp = p.log_probs().row(x);
    auto lq = q.log_probs().row(x);
    if (lp.size() != lq.size()) throw ShapeError("rows differ in width");
    double sum = 0.0;
    for (std::size_t y = 0; y < pr.size(); ++y) {
        if (pr[y] > 0.0) sum += pr[y] * (lp[y] - lq[y]);
    }
    return std::max(sum, 0.0);
}

double tv_at(const Policy& p, const Policy& q, std::size_t x) { return tv(p.row(x), q.row(x)); }

double kl_max(const Policy& old_policy, const Policy& new_policy) {
    require_compatible(old_policy, new_policy);
    double m = 0.0;
    for (std::size_t x = 0; x < old_policy.space().num_prompts(); ++x) m = std::max(m, kl_at(old_policy, new_policy, x));
    return m;
}

double tv_max(const Policy& a, const Policy& b) {
    require_compatible(a, b);
    double m = 0.0;
    for (std::size_t x = 0; x < a.space().num_prompts(); ++x) m = std::max(m, tv_at(a, b, x));
    return m;
}

double entropy_mean(const Policy& policy, const PromptDist& prompts) {
    if (prompts.size() != policy.space().num_prompts()) throw ShapeError("prompt distribution size mismatch");
    double h = 0.0;
    for (std::size_t x = 0; x < prompts.size(); ++x) h += prompts.weight(x) * entropy(policy.row(x));
    return h;
}

}  // namespace trpa
