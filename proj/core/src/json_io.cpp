#include "trpa/json_io.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <set>

namespace trpa {
namespace {

void require_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where, "'" + where + "' must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.contains(key)) {
            const std::string path = where.empty() ? key : where + "." + key;
            throw ConfigError(path, "unknown config key '" + path + "'");
        }
    }
}

std::string path_of(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
}

double get_number(const Json& j, const std::string& key, const std::string& where, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw ConfigError(path_of(where, key), "'" + path_of(where, key) + "' must be a number");
    return j[key].get<double>();
}

std::size_t get_count(const Json& j, const std::string& key, const std::string& where, std::size_t fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j[key];
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError(path_of(where, key), "'" + path_of(where, key) + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

std::string get_string(const Json& j, const std::string& key, const std::string& where, std::string fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_string()) throw ConfigError(path_of(where, key), "'" + path_of(where, key) + "' must be a string");
    return j[key].get<std::string>();
}

Environment environment_from_json(const Json& j) {
    const std::string where = "environment";
    require_keys(j, {"kind", "prompts", "responses", "levels", "rewards", "prompt_weights", "reference_logits",
                     "initial_logits"},
                 where);
    const std::string kind = get_string(j, "kind", where, "table");
    if (kind == "bandit") {
        if (j.size() != 1) throw ConfigError(where, "the bandit environment takes no further keys");
        return Environment::bandit();
    }
    if (kind != "table") throw ConfigError(where + ".kind", "environment kind must be 'bandit' or 'table'");
    try {
        SpacePtr space = space_from_json(j);
        if (!j.contains("levels")) throw ConfigError(where + ".levels", "table environment needs 'levels'");
        const RaggedTable lv = table_from_json(j["levels"], *space, "levels");
        LevelTable levels(space->num_prompts());
        for (std::size_t x = 0; x < lv.rows(); ++x) {
            for (double v : lv.row(x)) {
                if (v != std::floor(v)) throw ConfigError(where + ".levels", "levels must be integers 1..4");
                levels[x].push_back(level_from_int(static_cast<int>(v)));
            }
        }
        std::optional<RewardTable> rewards;
        if (j.contains("rewards")) rewards.emplace(space, table_from_json(j["rewards"], *space, "rewards"));
        PromptDist prompts = PromptDist::uniform(space->num_prompts());
        if (j.contains("prompt_weights")) {
            prompts = PromptDist(Categorical(j["prompt_weights"].get<std::vector<double>>()));
        }
        Policy ref = j.contains("reference_logits")
                         ? Policy(space, table_from_json(j["reference_logits"], *space, "reference_logits"))
                         : Policy::uniform(space);
        Policy init = j.contains("initial_logits")
                          ? Policy(space, table_from_json(j["initial_logits"], *space, "initial_logits"))
                          : ref;
        Environment env{space, std::move(prompts), std::move(levels), std::move(rewards), ref, init};
        env.validate();
        return env;
    } catch (const ConfigError&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where, std::string("malformed environment: ") + e.what());
    } catch (const std::exception& e) {
        throw ConfigError(where, std::string("invalid environment: ") + e.what());
    }
}

}  // namespace

SpacePtr space_from_json(const Json& j) {
    if (!j.contains("prompts") || !j["prompts"].is_array()) throw ConfigError("prompts", "missing 'prompts' array");
    if (!j.contains("responses") || !j["responses"].is_object()) {
        throw ConfigError("responses", "missing 'responses' object");
    }
    std::vector<std::string> prompts = j["prompts"].get<std::vector<std::string>>();
    std::vector<std::vector<std::string>> responses;
    for (const auto& p : prompts) {
        if (!j["responses"].contains(p)) throw ConfigError("responses", "no responses listed for prompt '" + p + "'");
        responses.push_back(j["responses"][p].get<std::vector<std::string>>());
    }
    return std::make_shared<const Space>(std::move(prompts), std::move(responses));
}

RaggedTable table_from_json(const Json& rows, const Space& space, const std::string& key) {
    if (!rows.is_object()) throw ConfigError(key, "'" + key + "' must map prompt ids to arrays");
    std::vector<std::vector<double>> out;
    for (std::size_t x = 0; x < space.num_prompts(); ++x) {
        const auto& id = space.prompt_id(x);
        if (!rows.contains(id)) throw ConfigError(key, "'" + key + "' has no row for prompt '" + id + "'");
        auto row = rows[id].get<std::vector<double>>();
        if (row.size() != space.num_responses(x)) {
            throw ConfigError(key, "'" + key + "' row for prompt '" + id + "' has the wrong length");
        }
        out.push_back(std::move(row));
    }
    return RaggedTable(out);
}

Json table_to_json(const RaggedTable& table, const Space& space) {
    Json out = Json::object();
    for (std::size_t x = 0; x < table.rows(); ++x) {
        const auto row = table.row(x);
        out[space.prompt_id(x)] = std::vector<double>(row.begin(), row.end());
    }
    return out;
}

Policy policy_from_json(const Json& j) {
    SpacePtr space = space_from_json(j);
    if (!j.contains("logits")) throw ConfigError("logits", "missing 'logits'");
    return Policy(space, table_from_json(j["logits"], *space, "logits"));
}

Json policy_to_json(const Policy& policy) {
    Json out;
    out["prompts"] = policy.space().prompts();
    Json responses = Json::object();
    for (std::size_t x = 0; x < policy.space().num_prompts(); ++x) {
        responses[policy.space().prompt_id(x)] = policy.space().responses(x);
    }
    out["responses"] = responses;
    out["logits"] = table_to_json(policy.logits(), policy.space());
    out["probs"] = table_to_json(policy.probs(), policy.space());
    return out;
}

RewardTable rewards_from_json(const Json& j) {
    SpacePtr space = space_from_json(j);
    if (!j.contains("rewards")) throw ConfigError("rewards", "missing 'rewards'");
    return RewardTable(space, table_from_json(j["rewards"], *space, "rewards"));
}

Json pair_to_json(const PreferencePair& pair, const std::string& prompt_id) {
    Json out;
    out["prompt"] = prompt_id;
    out["y1"] = pair.y1;
    out["y2"] = pair.y2;
    out["level1"] = to_int(pair.level1);
    out["level2"] = to_int(pair.level2);
    return out;
}

ParsedConfig config_from_json(const Json& j) {
    require_keys(j,
                 {"algorithm", "steps", "lr", "batch_prompts", "rollouts_per_prompt", "temperature", "snapshot_every",
                  "seed", "inner_steps", "mode", "trpa", "grpo", "environment", "svg"},
                 "");
    ParsedConfig out{TrainConfig{}, Environment::bandit(), false};
    TrainConfig& c = out.train;
    try {
        c.algorithm = algorithm_from_string(get_string(j, "algorithm", "", "trpa"));
    } catch (const DomainError& e) {
        throw ConfigError("algorithm", e.what());
    }
    c.steps = get_count(j, "steps", "", c.steps);
    c.lr = get_number(j, "lr", "", c.lr);
    c.batch_prompts = get_count(j, "batch_prompts", "", c.batch_prompts);
    c.rollouts_per_prompt = get_count(j, "rollouts_per_prompt", "", c.rollouts_per_prompt);
    c.temperature = get_number(j, "temperature", "", c.temperature);
    c.snapshot_every = get_count(j, "snapshot_every", "", c.snapshot_every);
    c.seed = get_count(j, "seed", "", c.seed);
    c.inner_steps = get_count(j, "inner_steps", "", c.inner_steps);
    const std::string mode = get_string(j, "mode", "", "sampled");
    if (mode == "exact") {
        c.trpa.mode = EvalMode::exact;
    } else if (mode == "sampled") {
        c.trpa.mode = EvalMode::sampled;
    } else {
        throw ConfigError("mode", "mode must be 'exact' or 'sampled'");
    }
    if (j.contains("trpa")) {
        const auto& t = j["trpa"];
        require_keys(t, {"beta", "n_factor", "lambda"}, "trpa");
        c.trpa.ktpo.beta = get_number(t, "beta", "trpa", c.trpa.ktpo.beta);
        c.trpa.ktpo.n_factor = get_number(t, "n_factor", "trpa", c.trpa.ktpo.n_factor);
        c.trpa.lambda = get_number(t, "lambda", "trpa", c.trpa.lambda);
    }
    if (j.contains("grpo")) {
        const auto& g = j["grpo"];
        require_keys(g, {"clip_eps", "beta_kl", "level_rewards"}, "grpo");
        c.grpo.clip_eps = get_number(g, "clip_eps", "grpo", c.grpo.clip_eps);
        c.grpo.beta_kl = get_number(g, "beta_kl", "grpo", c.grpo.beta_kl);
        if (g.contains("level_rewards")) {
            const auto& lr = g["level_rewards"];
            if (!lr.is_array() || lr.size() != 4) {
                throw ConfigError("grpo.level_rewards", "'grpo.level_rewards' must list 4 numbers");
            }
            for (std::size_t i = 0; i < 4; ++i) c.grpo.level_rewards[i] = lr[i].get<double>();
        }
    }
    if (j.contains("svg")) {
        if (!j["svg"].is_boolean()) throw ConfigError("svg", "'svg' must be a boolean");
        out.write_svg = j["svg"].get<bool>();
    }
    if (j.contains("environment")) out.env = environment_from_json(j["environment"]);
    try {
        c.validate();
    } catch (const DomainError& e) {
        throw ConfigError("config", e.what());
    }
    return out;
}

void write_metrics_csv(std::ostream& out, std::span<const TrainRecord> records) {
    out << "step,loss,accuracy,entropy,winner_logratio,loser_logratio,bound_slack\n";
    const auto num = [&](double v) -> std::ostream& {
        if (std::isnan(v)) return out << "nan";
        return out << v;
    };
    const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : records) {
        out << r.step << ',';
        num(r.loss) << ',';
        num(r.accuracy) << ',';
        num(r.entropy) << ',';
        num(r.winner_logratio) << ',';
        num(r.loser_logratio) << ',';
        num(r.bound_slack) << '\n';
    }
    out.precision(old_precision);
}

}  // namespace trpa
