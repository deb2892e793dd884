#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "trpa_cli/commands.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using trpa::cli::run;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        std::random_device rd;
        dir_ = fs::temp_directory_path() / ("trpa_cli_" + std::to_string(rd()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int invoke(std::vector<std::string> args) {
        args.insert(args.begin(), "trpa");
        out_.str("");
        err_.str("");
        return run(args, out_, err_);
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

    static std::vector<json> read_jsonl(const std::string& file) {
        std::ifstream in(file);
        std::vector<json> rows;
        for (std::string line; std::getline(in, line);) rows.push_back(json::parse(line));
        return rows;
    }

    static std::vector<std::string> read_lines(const std::string& file) {
        std::ifstream in(file);
        std::vector<std::string> lines;
        for (std::string line; std::getline(in, line);) lines.push_back(line);
        return lines;
    }

    fs::path dir_;
    std::ostringstream out_;
    std::ostringstream err_;
};

const std::string kFixtures = std::string(TRPA_SOURCE_DIR) + "/fixtures/case_studies.jsonl";

}  // namespace

TEST_F(CliTest, ClassifyFixtures) {
    ASSERT_EQ(invoke({"classify", kFixtures, "--out", path("out.jsonl")}), 0) << err_.str();
    const auto rows = read_jsonl(path("out.jsonl"));
    ASSERT_EQ(rows.size(), 5u);
    for (const auto& r : rows) {
        EXPECT_EQ(r["level"], r["expected_level"]) << r["case"];
        EXPECT_TRUE(r.contains("diagnostics"));
    }
    EXPECT_NE(out_.str().find("level1=4 level2=1"), std::string::npos) << out_.str();
}

TEST_F(CliTest, ClassifyEmptyFile) {
    write("empty.jsonl", "");
    EXPECT_EQ(invoke({"classify", path("empty.jsonl"), "--out", path("out.jsonl")}), 0);
    EXPECT_EQ(out_.str(), "level1=0 level2=0 level3=0 level4=0\n");
    EXPECT_TRUE(read_lines(path("out.jsonl")).empty());
}

TEST_F(CliTest, ClassifyMalformedLineReportsLineNumber) {
    write("bad.jsonl", R"({"prompt_id": "a", "text": "x"})" "\n" "{not json\n");
    EXPECT_EQ(invoke({"classify", path("bad.jsonl"), "--out", path("out.jsonl")}), 2);
    EXPECT_NE(err_.str().find("line 2"), std::string::npos) << err_.str();
    EXPECT_FALSE(fs::exists(path("out.jsonl")));

    write("missing.jsonl", R"({"text": "x"})" "\n");
    EXPECT_EQ(invoke({"classify", path("missing.jsonl"), "--out", path("out.jsonl")}), 2);
    EXPECT_NE(err_.str().find("line 1"), std::string::npos);
}

TEST_F(CliTest, ClassifyMissingInputIsIoError) {
    EXPECT_EQ(invoke({"classify", path("nope.jsonl"), "--out", path("out.jsonl")}), 1);
}

TEST_F(CliTest, PairsFromLevels) {
    write("levels.jsonl", R"({"prompt_id": "p", "level": 1}
{"prompt_id": "p", "level": 2}
{"prompt_id": "q", "level": 1}
{"prompt_id": "p", "level": 4}
{"prompt_id": "q", "level": 1}
{"prompt_id": "r", "level": 3}
{"prompt_id": "r", "level": 3}
)");
    ASSERT_EQ(invoke({"pairs", path("levels.jsonl"), "--out", path("pairs.jsonl")}), 0) << err_.str();
    const auto pairs = read_jsonl(path("pairs.jsonl"));
    ASSERT_EQ(pairs.size(), 3u);
    for (const auto& p : pairs) {
        EXPECT_EQ(p["prompt"], "p");
        EXPECT_LT(p["level1"].get<int>(), p["level2"].get<int>());
    }
    const auto groups = read_jsonl(path("pairs.jsonl.promptwise.jsonl"));
    ASSERT_EQ(groups.size(), 2u);
    EXPECT_EQ(groups[0]["prompt"], "q");
    EXPECT_EQ(groups[0]["level"], 1);
    EXPECT_EQ(groups[1]["level"], 3);
    EXPECT_EQ(out_.str(), "prompts=3 pairs=3 promptwise=2\n");
}

TEST_F(CliTest, PairsRejectsBadLevel) {
    write("levels.jsonl", R"({"prompt_id": "p", "level": 5})" "\n");
    EXPECT_EQ(invoke({"pairs", path("levels.jsonl"), "--out", path("pairs.jsonl")}), 2);
    EXPECT_NE(err_.str().find("line 1"), std::string::npos) << err_.str();
}

TEST_F(CliTest, TrainZeroStepsWritesHeaderOnly) {
    write("cfg.json", R"({"algorithm": "trpa", "steps": 0})");
    ASSERT_EQ(invoke({"train", path("cfg.json"), "--out", path("run")}), 0) << err_.str();
    EXPECT_EQ(read_lines(path("run/metrics.csv")),
              (std::vector<std::string>{"step,loss,accuracy,entropy,winner_logratio,loser_logratio,bound_slack"}));
    EXPECT_TRUE(fs::exists(path("run/final_policy.json")));
    EXPECT_FALSE(fs::exists(path("run/curves.svg")));
    EXPECT_NE(out_.str().find("final accuracy: 0.333"), std::string::npos) << out_.str();
}

TEST_F(CliTest, TrainShortRunWithSvg) {
    write("cfg.json", R"({"algorithm": "grpo", "steps": 20, "seed": 3})");
    ASSERT_EQ(invoke({"train", path("cfg.json"), "--out", path("run"), "--svg"}), 0) << err_.str();
    EXPECT_EQ(read_lines(path("run/metrics.csv")).size(), 21u);
    std::ifstream svg(path("run/curves.svg"));
    std::string head;
    std::getline(svg, head);
    EXPECT_NE(head.find("<svg"), std::string::npos);
}

TEST_F(CliTest, TrainConfigErrors) {
    write("cfg.json", R"({"algorithm": "trpa", "stepz": 3})");
    EXPECT_EQ(invoke({"train", path("cfg.json"), "--out", path("run")}), 2);
    EXPECT_NE(err_.str().find("stepz"), std::string::npos) << err_.str();
    write("broken.json", "{");
    EXPECT_EQ(invoke({"train", path("broken.json"), "--out", path("run")}), 2);
}

TEST_F(CliTest, TrainDivergenceExitsNumerical) {
    write("cfg.json", R"({"algorithm": "trpa", "mode": "exact", "steps": 5, "environment": {
        "kind": "table", "prompts": ["p"], "responses": {"p": ["a", "b", "c"]},
        "levels": {"p": [1, 2, 4]}, "rewards": {"p": [1, 0, -1]},
        "initial_logits": {"p": [1.7e308, 0, -1.7e308]}}})");
    EXPECT_EQ(invoke({"train", path("cfg.json"), "--out", path("run")}), 3);
    EXPECT_NE(err_.str().find("diverged"), std::string::npos) << err_.str();
    EXPECT_EQ(read_lines(path("run/metrics.csv")).size(), 2u);
}

TEST_F(CliTest, VerifyUnknownSuite) {
    EXPECT_EQ(invoke({"verify", "lemma9", "--out", path("v")}), 2);
    EXPECT_NE(err_.str().find("lemma9"), std::string::npos);
}

TEST_F(CliTest, VerifyLandscapeGrid) {
    ASSERT_EQ(invoke({"verify", "landscape", "--out", path("v"), "--grid", "201"}), 0) << err_.str();
    const auto lines = read_lines(path("v/landscape.csv"));
    ASSERT_EQ(lines.size(), 201u * 201u + 1u);
    EXPECT_EQ(lines.front(), "p,q,H,KL");
    const auto report = json::parse(std::ifstream(path("v/landscape.json")));
    EXPECT_TRUE(report[0]["pass"].get<bool>());
}

TEST_F(CliTest, VerifyTheoremReportsMinSlack) {
    ASSERT_EQ(invoke({"verify", "theorem1", "--out", path("v"), "--trials", "1000"}), 0) << err_.str();
    const auto report = json::parse(std::ifstream(path("v/theorem1.json")));
    ASSERT_EQ(report.size(), 3u);
    EXPECT_EQ(report[0]["metrics"]["trials"], 1000);
    EXPECT_GE(report[0]["metrics"]["min_slack"].get<double>(), -1e-9);
    EXPECT_EQ(report[0]["metrics"]["violations"], 0);
}

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(invoke({}), 2);
    EXPECT_EQ(invoke({"frobnicate"}), 2);
    EXPECT_EQ(invoke({"classify", kFixtures}), 2);
    EXPECT_EQ(invoke({"--help"}), 0);
}
