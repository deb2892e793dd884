#include "trpa/rules.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <regex>
#include <set>

#include "trpa/errors.hpp"

namespace trpa {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";
constexpr std::string_view kBoxed = "\\boxed{";

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    bool gap = false;
    for (char c : trim(s)) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            gap = true;
            continue;
        }
        if (gap && !out.empty()) out.push_back(' ');
        gap = false;
        out.push_back(c);
    }
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::size_t count_of(std::string_view haystack, std::string_view needle) {
    std::size_t n = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

FormatCheck fail(std::string reason) { return FormatCheck{false, std::nullopt, std::move(reason)}; }

// Body of the last balanced \boxed{...} group, or nullopt.
std::optional<std::string> last_boxed(std::string_view span, std::string& reason) {
    const std::size_t start = span.rfind(kBoxed);
    if (start == std::string_view::npos) {
        reason = "answer lacks \\boxed{}";
        return std::nullopt;
    }
    int depth = 1;
    const std::size_t body = start + kBoxed.size();
    for (std::size_t i = body; i < span.size(); ++i) {
        if (span[i] == '{') ++depth;
        if (span[i] == '}' && --depth == 0) return std::string(span.substr(body, i - body));
    }
    reason = "unbalanced \\boxed{";
    return std::nullopt;
}

struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;
};

bool parse_int(std::string_view s, std::int64_t& out) {
    if (s.empty() || s.size() > 18) return false;
    std::int64_t v = 0;
    for (char c : s) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

// Integers, decimals, a/b and \frac{a}{b}; anything else is not a number here.
std::optional<Rational> parse_rational(std::string_view raw) {
    std::string s;
    for (char c : raw) {
        if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
    }
    bool negative = false;
    std::string_view v = s;
    if (!v.empty() && (v.front() == '-' || v.front() == '+')) {
        negative = v.front() == '-';
        v.remove_prefix(1);
    }
    std::int64_t num = 0;
    std::int64_t den = 1;
    static const std::regex frac(R"(^\\[dt]?frac\{(\d+)\}\{(\d+)\}$)");
    std::match_results<std::string_view::const_iterator> m;
    if (std::regex_match(v.begin(), v.end(), m, frac)) {
        if (!parse_int(m[1].str(), num) || !parse_int(m[2].str(), den)) return std::nullopt;
    } else if (auto slash = v.find('/'); slash != std::string_view::npos) {
        if (!parse_int(v.substr(0, slash), num) || !parse_int(v.substr(slash + 1), den)) return std::nullopt;
    } else if (auto dot = v.find('.'); dot != std::string_view::npos) {
        const auto whole = v.substr(0, dot);
        const auto frac_part = v.substr(dot + 1);
        if (frac_part.empty() || whole.size() + frac_part.size() > 18) return std::nullopt;
        std::int64_t w = 0;
        if (!whole.empty() && !parse_int(whole, w)) return std::nullopt;
        if (!parse_int(frac_part, num)) return std::nullopt;
        for (std::size_t i = 0; i < frac_part.size(); ++i) den *= 10;
        num += w * den;
    } else if (!parse_int(v, num)) {
        return std::nullopt;
    }
    if (den == 0) return std::nullopt;
    return Rational{negative ? -num : num, den};
}

bool rationals_equal(const Rational& a, const Rational& b) {
    // Compare reduced forms so no cross-multiplication can overflow.
    auto reduce = [](Rational r) {
        if (r.den < 0) r = {-r.num, -r.den};
        const auto g = std::gcd(r.num, r.den);
        return g == 0 ? r : Rational{r.num / g, r.den / g};
    };
    const Rational x = reduce(a);
    const Rational y = reduce(b);
    return x.num == y.num && x.den == y.den;
}

// NAME -> roles asserted for it ("knight"/"knave").
std::map<std::string, std::set<std::string>> knight_knave_assertions(const std::string& text) {
    static const std::regex claim(R"(([A-Za-z][A-Za-z'\-]*)\s+is\s+a\s+(knight|knave))", std::regex::icase);
    std::map<std::string, std::set<std::string>> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), claim); it != std::sregex_iterator(); ++it) {
        out[lower((*it)[1].str())].insert(lower((*it)[2].str()));
    }
    return out;
}

Classification judge_logic(const std::string& answer, const std::string& gold) {
    const auto truth = knight_knave_assertions(gold);
    if (truth.empty()) return {PreferenceLevel::incomplete, answer, "gold has no knight/knave assignments"};
    const auto claims = knight_knave_assertions(answer);
    std::vector<std::string> notes;
    bool wrong = false;
    bool missing = false;
    for (const auto& [name, roles] : claims) {
        if (roles.size() > 1) {
            wrong = true;
            notes.push_back("contradiction for " + name);
        }
    }
    for (const auto& [name, roles] : truth) {
        auto it = claims.find(name);
        if (it == claims.end()) {
            missing = true;
            notes.push_back("unasserted " + name);
            continue;
        }
        if (it->second != roles) {
            wrong = true;
            notes.push_back("wrong role for " + name);
        }
    }
    std::string diag;
    for (const auto& n : notes) diag += (diag.empty() ? "" : "; ") + n;
    if (wrong) return {PreferenceLevel::wrong, answer, diag};
    if (missing) return {PreferenceLevel::incomplete, answer, diag};
    return {PreferenceLevel::correct, answer, "ok"};
}

Classification judge_math(const std::string& answer, const std::string& gold_raw) {
    std::string gold = gold_raw;
    if (gold.find(kBoxed) != std::string::npos) {
        std::string reason;
        if (auto inner = last_boxed(gold, reason)) gold = *inner;
    }
    const std::string a = collapse_whitespace(answer);
    const std::string g = collapse_whitespace(gold);
    if (g.empty()) return {PreferenceLevel::incomplete, answer, "gold answer is empty"};
    if (a == g) return {PreferenceLevel::correct, answer, "ok"};
    const auto ra = parse_rational(a);
    const auto rg = parse_rational(g);
    if (ra && rg) {
        if (rationals_equal(*ra, *rg)) return {PreferenceLevel::correct, answer, "ok (rational match)"};
        return {PreferenceLevel::wrong, answer, "numeric mismatch"};
    }
    return {PreferenceLevel::wrong, answer, "string mismatch"};
}

}  // namespace

TaskKind task_from_string(std::string_view name) {
    if (name == "logic") return TaskKind::logic;
    if (name == "math") return TaskKind::math;
    throw DomainError("unknown task kind '" + std::string(name) + "'");
}

std::string_view to_string(TaskKind task) noexcept { return task == TaskKind::logic ? "logic" : "math"; }

std::string strip_control_tokens(std::string_view text) {
    // ASCII "<|...|>" and the full-width "<｜...｜>" variant.
    static constexpr std::string_view kWideBar = "\xEF\xBD\x9C";
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '<') {
            std::string_view bar;
            if (text.substr(i + 1, 1) == "|") bar = "|";
            else if (text.substr(i + 1, kWideBar.size()) == kWideBar) bar = kWideBar;
            if (!bar.empty()) {
                const std::size_t body = i + 1 + bar.size();
                const std::size_t close = text.find(std::string(bar) + ">", body);
                const std::size_t next_open = text.find('<', body);
                if (close != std::string_view::npos && (next_open == std::string_view::npos || next_open > close)) {
                    i = close + bar.size() + 1;
                    continue;
                }
            }
        }
        out.push_back(text[i++]);
    }
    return out;
}

FormatCheck check_format(std::string_view raw, TaskKind task) {
    const std::string text = strip_control_tokens(raw);
    const std::string_view t = text;
    if (count_of(t, kThinkOpen) != 1 || count_of(t, kThinkClose) != 1) return fail("need exactly one think block");
    const std::size_t think_open = t.find(kThinkOpen);
    const std::size_t think_close = t.find(kThinkClose);
    if (think_close < think_open) return fail("</think> precedes <think>");
    if (!is_blank(t.substr(0, think_open))) return fail("text before <think>");
    const std::string_view after_think = t.substr(think_close + kThinkClose.size());

    const std::size_t n_open = count_of(t, kAnswerOpen);
    const std::size_t n_close = count_of(t, kAnswerClose);
    std::string_view span;
    if (n_open == 0 && n_close == 0 && task == TaskKind::math) {
        span = after_think;
    } else {
        if (n_open != 1 || n_close != 1) return fail("need exactly one answer block");
        const std::size_t a_open = after_think.find(kAnswerOpen);
        const std::size_t a_close = after_think.find(kAnswerClose);
        if (a_open == std::string_view::npos || a_close == std::string_view::npos) {
            return fail("answer block must follow the think block");
        }
        if (a_close < a_open) return fail("</answer> precedes <answer>");
        if (!is_blank(after_think.substr(0, a_open))) return fail("text between </think> and <answer>");
        if (!is_blank(after_think.substr(a_close + kAnswerClose.size()))) return fail("text after </answer>");
        span = after_think.substr(a_open + kAnswerOpen.size(), a_close - a_open - kAnswerOpen.size());
    }

    if (task == TaskKind::math) {
        std::string reason;
        auto boxed = last_boxed(span, reason);
        if (!boxed) return fail(reason);
        return FormatCheck{true, trim(*boxed), "ok"};
    }
    return FormatCheck{true, trim(span), "ok"};
}

Classification classify(const ResponseRecord& record) {
    const FormatCheck fmt = check_format(record.text, record.task);
    if (!fmt.ok) return {PreferenceLevel::bad_format, std::nullopt, "format: " + fmt.reason};
    const std::string& answer = *fmt.answer;
    if (answer.empty()) return {PreferenceLevel::incomplete, answer, "empty answer"};
    if (!record.gold) return {PreferenceLevel::incomplete, answer, "unjudgeable: missing gold"};
    return record.task == TaskKind::logic ? judge_logic(answer, *record.gold) : judge_math(answer, *record.gold);
}

std::vector<PreferencePair> build_pairs(std::size_t prompt, std::span<const PreferenceLevel> levels) {
    std::vector<PreferencePair> pairs;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        for (std::size_t j = i + 1; j < levels.size(); ++j) {
            if (levels[i] == levels[j]) continue;
            if (is_better(levels[i], levels[j])) pairs.push_back({prompt, i, j, levels[i], levels[j]});
            else pairs.push_back({prompt, j, i, levels[j], levels[i]});
        }
    }
    return pairs;
}

void KtpoConfig::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw DomainError("KTPO beta must be positive");
    if (!(n_factor >= 1.0) || !std::isfinite(n_factor)) throw DomainError("Kahneman-Tversky factor must be >= 1");
}

double ktpo_beta(const KtpoConfig& cfg, PreferenceLevel level_of_y1) {
    cfg.validate();
    return level_of_y1 == PreferenceLevel::correct ? cfg.n_factor * cfg.beta : cfg.beta;
}

}  // namespace trpa
