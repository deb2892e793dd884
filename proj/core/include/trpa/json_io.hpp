#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include <json.hpp>

#include "trpa/errors.hpp"
#include "trpa/policy.hpp"
#include "trpa/preference.hpp"
#include "trpa/trainer.hpp"

namespace trpa {

using Json = nlohmann::ordered_json;

/// Configuration rejected during parsing. `key()` names the offending entry.
class ConfigError : public DomainError {
public:
    ConfigError(std::string key, const std::string& what) : DomainError(what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// {"prompts": [...], "responses": {prompt: [...]}}
SpacePtr space_from_json(const Json& j);

/// Per-prompt numeric rows keyed by prompt id, e.g. j["logits"].
RaggedTable table_from_json(const Json& rows, const Space& space, const std::string& key);
Json table_to_json(const RaggedTable& table, const Space& space);

/// {"prompts", "responses", "logits"}
Policy policy_from_json(const Json& j);
Json policy_to_json(const Policy& policy);

/// {"prompts", "responses", "rewards"}
RewardTable rewards_from_json(const Json& j);

/// {"prompt", "y1", "y2", "level1", "level2"}; prompt is the string id.
Json pair_to_json(const PreferencePair& pair, const std::string& prompt_id);

struct ParsedConfig {
    TrainConfig train;
    Environment env;
    bool write_svg = false;
};

/// Parses a training config. Unknown or ill-typed keys raise ConfigError.
ParsedConfig config_from_json(const Json& j);

/// step,loss,accuracy,entropy,winner_logratio,loser_logratio,bound_slack
void write_metrics_csv(std::ostream& out, std::span<const TrainRecord> records);

}  // namespace trpa
