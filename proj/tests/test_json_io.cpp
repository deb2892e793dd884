#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "trpa/json_io.hpp"

using namespace trpa;
using L = PreferenceLevel;

namespace {

Json load(const std::string& rel) {
    std::ifstream in(std::string(TRPA_SOURCE_DIR) + "/" + rel);
    return Json::parse(in);
}

std::string error_key(const Json& j) {
    try {
        config_from_json(j);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<none>";
}

}  // namespace

TEST(Config, ShippedConfigsParse) {
    const auto trpa_cfg = config_from_json(load("configs/trpa_bandit.json"));
    EXPECT_EQ(trpa_cfg.train.algorithm, Algorithm::trpa);
    EXPECT_EQ(trpa_cfg.train.steps, 2000u);
    EXPECT_EQ(trpa_cfg.train.seed, 7u);
    EXPECT_DOUBLE_EQ(trpa_cfg.train.trpa.ktpo.beta, 0.1);
    EXPECT_DOUBLE_EQ(trpa_cfg.train.trpa.ktpo.n_factor, 2.0);
    EXPECT_EQ(trpa_cfg.train.trpa.mode, EvalMode::sampled);
    EXPECT_TRUE(trpa_cfg.write_svg);
    EXPECT_EQ(trpa_cfg.env.space->response_id(0, 0), "correct");

    const auto grpo_cfg = config_from_json(load("configs/grpo_bandit.json"));
    EXPECT_EQ(grpo_cfg.train.algorithm, Algorithm::grpo);
    EXPECT_DOUBLE_EQ(grpo_cfg.train.grpo.clip_eps, 0.2);
}

TEST(Config, DefaultsApplyToMissingKeys) {
    const auto c = config_from_json(Json::parse(R"({"algorithm": "grpo"})"));
    EXPECT_EQ(c.train.steps, TrainConfig{}.steps);
    EXPECT_EQ(c.train.grpo.level_rewards, (std::array<double, 4>{1.0, 0.0, -0.5, -1.0}));
    EXPECT_FALSE(c.write_svg);
}

TEST(Config, TableEnvironment) {
    const auto c = config_from_json(Json::parse(R"({
        "algorithm": "trpa", "mode": "exact",
        "environment": {
            "kind": "table", "prompts": ["a", "b"],
            "responses": {"a": ["r1", "r2"], "b": ["s1", "s2", "s3"]},
            "levels": {"a": [1, 4], "b": [2, 3, 1]},
            "rewards": {"a": [1, -1], "b": [0, -0.5, 1]},
            "prompt_weights": [0.25, 0.75],
            "reference_logits": {"a": [0, 1], "b": [0, 0, 0]}
        }})"));
    const auto& env = c.env;
    EXPECT_EQ(env.levels[1], (std::vector<L>{L::wrong, L::incomplete, L::correct}));
    ASSERT_TRUE(env.rewards.has_value());
    EXPECT_EQ(env.rewards->at(1, 1), -0.5);
    EXPECT_EQ(env.prompts.weight(1), 0.75);
    EXPECT_EQ(env.initial.logits(), env.reference.logits());
    EXPECT_EQ(env.reference.logits().at(0, 1), 1.0);
}

TEST(Config, ErrorsNameTheOffendingKey) {
    EXPECT_EQ(error_key(Json::parse(R"({"stepz": 3})")), "stepz");
    EXPECT_EQ(error_key(Json::parse(R"({"trpa": {"beta": 0.1, "gamma": 1}})")), "trpa.gamma");
    EXPECT_EQ(error_key(Json::parse(R"({"lr": "fast"})")), "lr");
    EXPECT_EQ(error_key(Json::parse(R"({"mode": "approximate"})")), "mode");
    EXPECT_EQ(error_key(Json::parse(R"({"algorithm": "ppo"})")), "algorithm");
    EXPECT_EQ(error_key(Json::parse(R"({"grpo": {"level_rewards": [1, 0]}})")), "grpo.level_rewards");
    EXPECT_EQ(error_key(Json::parse(R"({"environment": {"kind": "maze"}})")), "environment.kind");
    EXPECT_EQ(error_key(Json::parse(R"({"algorithm": "grpo", "mode": "exact"})")), "config");
    EXPECT_EQ(error_key(Json::parse(R"({"steps": -1})")), "steps");
    EXPECT_EQ(error_key(Json::parse(R"([1, 2])")), "");
}

TEST(PolicyJson, RoundTrip) {
    auto space = std::make_shared<const Space>(std::vector<std::string>{"p", "q"},
                                               std::vector<std::vector<std::string>>{{"a", "b"}, {"c", "d", "e"}});
    const Policy p(space, RaggedTable(std::vector<std::vector<double>>{{0.125, -3.5}, {1e-9, 2.0, 0.0}}));
    const Json j = policy_to_json(p);
    EXPECT_TRUE(j.contains("probs"));
    const Policy back = policy_from_json(Json::parse(j.dump()));
    EXPECT_EQ(back.logits(), p.logits());
    EXPECT_EQ(back.space(), p.space());
    EXPECT_THROW(policy_from_json(Json::parse(R"({"prompts": ["p"], "responses": {"p": ["a", "b"]}})")), ConfigError);
}

TEST(RewardsJson, ParsesRows) {
    const auto r = rewards_from_json(
        Json::parse(R"({"prompts": ["p"], "responses": {"p": ["a", "b"]}, "rewards": {"p": [1.5, -2]}})"));
    EXPECT_EQ(r.at(0, 0), 1.5);
    EXPECT_EQ(r.at(0, 1), -2.0);
}

TEST(PairJson, Fields) {
    const Json j = pair_to_json({0, 2, 1, L::correct, L::bad_format}, "prompt-7");
    EXPECT_EQ(j["prompt"], "prompt-7");
    EXPECT_EQ(j["level1"], 1);
    EXPECT_EQ(j["level2"], 4);
}

TEST(MetricsCsv, HeaderAndRows) {
    std::ostringstream out;
    write_metrics_csv(out, std::vector<TrainRecord>{});
    EXPECT_EQ(out.str(), "step,loss,accuracy,entropy,winner_logratio,loser_logratio,bound_slack\n");

    std::ostringstream rows;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    write_metrics_csv(rows, std::vector<TrainRecord>{{3, 0.1, 0.5, 1.0, 0.25, -0.25, nan}});
    std::string header, line;
    std::istringstream in(rows.str());
    std::getline(in, header);
    std::getline(in, line);
    EXPECT_EQ(line, "3,0.10000000000000001,0.5,1,0.25,-0.25,nan");
}
