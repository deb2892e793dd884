#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trpa/preference.hpp"

namespace trpa {

enum class TaskKind { logic, math };

/// "logic" or "math"; anything else throws DomainError.
TaskKind task_from_string(std::string_view name);
std::string_view to_string(TaskKind task) noexcept;

/// One response from a corpus row.
struct ResponseRecord {
    std::string prompt_id;
    std::string text;
    std::optional<std::string> gold;
    TaskKind task = TaskKind::logic;
};

/// Result of the structural check. `answer` is the payload that gets judged:
/// the trimmed <answer> body for logic, the last \boxed{...} body for math.
struct FormatCheck {
    bool ok = false;
    std::optional<std::string> answer;
    std::string reason;
};

/// Strict CoT template check: one <think>...</think> block, then one
/// <answer>...</answer> block, with only whitespace around them. For math the
/// answer span must hold a balanced \boxed{...}; a math response may also put
/// its answer directly after </think> without <answer> tags. Chat-template
/// control tokens such as <|im_end|> are ignored.
FormatCheck check_format(std::string_view text, TaskKind task);

struct Classification {
    PreferenceLevel level = PreferenceLevel::bad_format;
    std::optional<std::string> answer;
    std::string diagnostics;
};

/// Total map onto the four preference levels.
Classification classify(const ResponseRecord& record);

/// All distinct-level pairs among one prompt's responses, oriented so that y1
/// has the better level, in lexicographic (i, j) order with i < j. Responses
/// are addressed by their position in `levels`.
std::vector<PreferencePair> build_pairs(std::size_t prompt, std::span<const PreferenceLevel> levels);

struct KtpoConfig {
    double beta = 0.1;      ///< base preference temperature
    double n_factor = 2.0;  ///< Kahneman-Tversky factor N >= 1

    /// Throws DomainError on beta <= 0 or N < 1.
    void validate() const;
};

/// N * beta when the winner is level 1, beta otherwise.
double ktpo_beta(const KtpoConfig& cfg, PreferenceLevel level_of_y1);

/// Removes <|...|> and <｜...｜> chat-template control tokens.
std::string strip_control_tokens(std::string_view text);

}  // namespace trpa
