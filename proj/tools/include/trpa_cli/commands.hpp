#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace trpa::cli {

/// Process exit statuses.
enum ExitCode : int {
    kOk = 0,
    kIoError = 1,
    kUsage = 2,
    kNumerical = 3,
};

struct ClassifyOptions {
    std::string input;
    std::string output;
    std::string task = "logic";  ///< used for rows without a "task" field
};

struct PairsOptions {
    std::string input;
    std::string output;
    std::string promptwise;  ///< empty: <output>.promptwise.jsonl
};

struct TrainOptions {
    std::string config;
    std::string outdir;
    std::optional<std::uint64_t> seed;
    bool svg = false;
};

struct VerifyOptions {
    std::string suite;
    std::string outdir;
    std::uint64_t seed = 0;
    std::size_t trials = 1000;
    std::size_t grid = 201;
};

int cmd_classify(const ClassifyOptions& opts, std::ostream& out, std::ostream& err);
int cmd_pairs(const PairsOptions& opts, std::ostream& out, std::ostream& err);
int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err);
int cmd_verify(const VerifyOptions& opts, std::ostream& out, std::ostream& err);

const std::vector<std::string>& verify_suites();

/// Parses argv and dispatches to a subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trpa::cli
