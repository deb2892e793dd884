#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "trpa/distmath.hpp"
#include "trpa/policy.hpp"

namespace trpa {

/// Rule-based quality grade of a response; 1 is best, 4 is worst.
enum class PreferenceLevel : int {
    correct = 1,     ///< correct format and correct answer
    wrong = 2,       ///< correct format, wrong answer
    incomplete = 3,  ///< correct format, answer cannot be judged
    bad_format = 4,  ///< format requirements violated
};

constexpr int to_int(PreferenceLevel level) noexcept { return static_cast<int>(level); }
/// Throws DomainError outside 1..4.
PreferenceLevel level_from_int(int level);
constexpr bool is_better(PreferenceLevel a, PreferenceLevel b) noexcept { return to_int(a) < to_int(b); }

/// Levels per (prompt, response), parallel to a Space.
using LevelTable = std::vector<std::vector<PreferenceLevel>>;

/// Comparison of two responses of one prompt. When built from rules, y1 is
/// the strictly better-levelled side.
struct PreferencePair {
    std::size_t prompt = 0;
    std::size_t y1 = 0;
    std::size_t y2 = 0;
    PreferenceLevel level1 = PreferenceLevel::correct;
    PreferenceLevel level2 = PreferenceLevel::bad_format;

    friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

/// Ground-truth preference p*(z | y1, y2, x).
class PreferenceModel {
public:
    enum class Kind { bt_from_rewards, rule_deterministic };

    static PreferenceModel bradley_terry(RewardTable rewards);
    static PreferenceModel rule_deterministic(LevelTable levels);

    Kind kind() const noexcept { return kind_; }
    bool is_smooth() const noexcept { return kind_ == Kind::bt_from_rewards; }
    /// Present for bt_from_rewards only.
    const RewardTable* rewards() const noexcept { return rewards_ ? &*rewards_ : nullptr; }
    const LevelTable& levels() const noexcept { return levels_; }

    /// p*(z = 1 | y1, y2, x). Rule models throw PreconditionError on equal levels.
    double p1(std::size_t x, std::size_t y1, std::size_t y2) const;
    BinaryDist pstar(std::size_t x, std::size_t y1, std::size_t y2) const { return BinaryDist(p1(x, y1, y2)); }

private:
    PreferenceModel(Kind kind, std::optional<RewardTable> rewards, LevelTable levels);

    Kind kind_;
    std::optional<RewardTable> rewards_;
    LevelTable levels_;
};

/// Bradley-Terry: p*(z=1) = sigmoid(r(x,y1) - r(x,y2)).
BinaryDist bt_prob(const RewardTable& rewards, std::size_t x, std::size_t y1, std::size_t y2);

/// Log-ratio log(pi_theta(y|x) / pi_ref(y|x)).
double log_ratio(const Policy& theta, const Policy& ref, std::size_t x, std::size_t y);

/// beta1 * log-ratio(y1) - beta2 * log-ratio(y2). With beta1 == beta2 this is
/// the DPO implicit-reward margin.
double margin(const Policy& theta, const Policy& ref, double beta1, double beta2, std::size_t x, std::size_t y1,
              std::size_t y2);

/// p_theta(z = 1) = sigmoid(margin(theta, ref, beta, beta, x, y1, y2)).
BinaryDist implied_pref(const Policy& theta, const Policy& ref, double beta, std::size_t x, std::size_t y1,
                        std::size_t y2);

/// M = sum_z p* log p* = -binary_entropy(p*); lies in [-log 2, 0].
double m_term(const BinaryDist& pstar);

/// Deterministic rule preference: y1 wins with certainty. Equal or inverted
/// levels throw PreconditionError.
BinaryDist rule_pref(const PreferencePair& pair);

}  // namespace trpa
