#include "trpa/preference.hpp"

#include <cmath>
#include <string>

#include "trpa/errors.hpp"

namespace trpa {

PreferenceLevel level_from_int(int level) {
    if (level < 1 || level > 4) throw DomainError("preference level " + std::to_string(level) + " outside 1..4");
    return static_cast<PreferenceLevel>(level);
}

PreferenceModel::PreferenceModel(Kind kind, std::optional<RewardTable> rewards, LevelTable levels)
    : kind_(kind), rewards_(std::move(rewards)), levels_(std::move(levels)) {}

PreferenceModel PreferenceModel::bradley_terry(RewardTable rewards) {
    return PreferenceModel(Kind::bt_from_rewards, std::move(rewards), {});
}

PreferenceModel PreferenceModel::rule_deterministic(LevelTable levels) {
    return PreferenceModel(Kind::rule_deterministic, std::nullopt, std::move(levels));
}

double PreferenceModel::p1(std::size_t x, std::size_t y1, std::size_t y2) const {
    if (kind_ == Kind::bt_from_rewards) return bt_prob(*rewards_, x, y1, y2).p1();
    const auto& row = levels_.at(x);
    const PreferenceLevel a = row.at(y1);
    const PreferenceLevel b = row.at(y2);
    if (a == b) throw PreconditionError("rule preference undefined for equal levels");
    return is_better(a, b) ? 1.0 : 0.0;
}

BinaryDist bt_prob(const RewardTable& rewards, std::size_t x, std::size_t y1, std::size_t y2) {
    return BinaryDist(sigmoid(rewards.at(x, y1) - rewards.at(x, y2)));
}

double log_ratio(const Policy& theta, const Policy& ref, std::size_t x, std::size_t y) {
    return theta.log_prob(x, y) - ref.log_prob(x, y);
}

double margin(const Policy& theta, const Policy& ref, double beta1, double beta2, std::size_t x, std::size_t y1,
              std::size_t y2) {
    if (!(beta1 > 0.0) || !(beta2 > 0.0)) throw DomainError("margin needs positive betas");
    require_compatible(theta, ref);
    const double l1 = log_ratio(theta, ref, x, y1);
    const double l2 = log_ratio(theta, ref, x, y2);
    // A reference probability of exactly zero yields an infinite log-ratio; the
    // infinities propagate as the signal.
    return beta1 * l1 - beta2 * l2;
}

BinaryDist implied_pref(const Policy& theta, const Policy& ref, double beta, std::size_t x, std::size_t y1,
                        std::size_t y2) {
    const double h = margin(theta, ref, beta, beta, x, y1, y2);
    if (std::isinf(h)) return BinaryDist(h > 0 ? 1.0 : 0.0);
    return BinaryDist(sigmoid(h));
}

double m_term(const BinaryDist& pstar) { return -binary_entropy(pstar.p1()); }

BinaryDist rule_pref(const PreferencePair& pair) {
    if (!is_better(pair.level1, pair.level2)) {
        throw PreconditionError("rule preference requires level1 strictly better than level2");
    }
    return BinaryDist(1.0);
}

}  // namespace trpa
