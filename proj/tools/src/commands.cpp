#include "trpa_cli/commands.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "trpa/json_io.hpp"
#include "trpa/rules.hpp"
#include "trpa/svg.hpp"
#include "trpa/trainer.hpp"
#include "trpa/verify.hpp"

namespace trpa::cli {
namespace fs = std::filesystem;

namespace {

// Thrown by the JSONL reader; carries the exit status to report.
struct CommandFailure {
    int code;
    std::string message;
};

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CommandFailure{kIoError, "cannot open '" + path + "' for reading"};
    return in;
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path);
    if (!out) throw CommandFailure{kIoError, "cannot open '" + path.string() + "' for writing"};
    return out;
}

fs::path prepare_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw CommandFailure{kIoError, "cannot create directory '" + dir + "'"};
    return fs::path(dir);
}

// Calls fn(line_number, object) for every non-blank line.
template <class Fn>
void for_each_jsonl(std::istream& in, Fn&& fn) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw CommandFailure{kUsage, "line " + std::to_string(number) + ": malformed JSON: " + e.what()};
        }
        if (!j.is_object()) throw CommandFailure{kUsage, "line " + std::to_string(number) + ": expected an object"};
        try {
            fn(number, j);
        } catch (const CommandFailure&) {
            throw;
        } catch (const std::exception& e) {
            throw CommandFailure{kUsage, "line " + std::to_string(number) + ": " + e.what()};
        }
    }
}

std::string required_string(const Json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
        throw DomainError(std::string("missing string field '") + key + "'");
    }
    return j[key].get<std::string>();
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const CommandFailure& f) {
        err << "error: " << f.message << '\n';
        return f.code;
    } catch (const ConfigError& e) {
        err << "error: invalid config key '" << e.key() << "': " << e.what() << '\n';
        return kUsage;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
}

std::string curves_svg(const TrainResult& result, const std::string& algorithm) {
    Series acc{"accuracy", {}, {}}, loss{"loss", {}, {}}, win{"winner", {}, {}}, lose{"loser", {}, {}};
    for (const auto& r : result.records) {
        const double s = static_cast<double>(r.step);
        acc.x.push_back(s);
        acc.y.push_back(r.accuracy);
        loss.x.push_back(s);
        loss.y.push_back(r.loss);
        win.x.push_back(s);
        win.y.push_back(r.winner_logratio);
        lose.x.push_back(s);
        lose.y.push_back(r.loser_logratio);
    }
    return stack_charts({line_chart(algorithm + " accuracy", "step", {acc}),
                         line_chart(algorithm + " loss", "step", {loss}),
                         line_chart(algorithm + " log(pi/pi_ref)", "step", {win, lose})});
}

}  // namespace

int cmd_classify(const ClassifyOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const TaskKind default_task = task_from_string(opts.task);
        auto in = open_input(opts.input);
        std::vector<Json> rows;
        std::array<std::size_t, 4> counts{};
        for_each_jsonl(in, [&](std::size_t, Json& j) {
            ResponseRecord rec;
            rec.prompt_id = required_string(j, "prompt_id");
            rec.text = required_string(j, "text");
            if (j.contains("gold") && !j["gold"].is_null()) {
                if (!j["gold"].is_string()) throw DomainError("field 'gold' must be a string");
                rec.gold = j["gold"].get<std::string>();
            }
            rec.task = j.contains("task") ? task_from_string(required_string(j, "task")) : default_task;
            const auto c = classify(rec);
            j["level"] = to_int(c.level);
            j["diagnostics"] = c.diagnostics;
            ++counts[static_cast<std::size_t>(to_int(c.level) - 1)];
            rows.push_back(std::move(j));
        });
        // Output is written only after the whole input validated.
        auto o = open_output(opts.output);
        for (const auto& r : rows) o << r.dump() << '\n';
        out << "level1=" << counts[0] << " level2=" << counts[1] << " level3=" << counts[2]
            << " level4=" << counts[3] << '\n';
        return static_cast<int>(kOk);
    });
}

int cmd_pairs(const PairsOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto in = open_input(opts.input);
        std::vector<std::string> order;
        std::map<std::string, std::vector<PreferenceLevel>> by_prompt;
        for_each_jsonl(in, [&](std::size_t, const Json& j) {
            const std::string prompt = required_string(j, "prompt_id");
            if (!j.contains("level") || !j["level"].is_number_integer()) {
                throw DomainError("missing integer field 'level'");
            }
            const PreferenceLevel level = level_from_int(j["level"].get<int>());
            if (!by_prompt.contains(prompt)) order.push_back(prompt);
            by_prompt[prompt].push_back(level);
        });
        const fs::path side = opts.promptwise.empty() ? fs::path(opts.output + ".promptwise.jsonl")
                                                      : fs::path(opts.promptwise);
        auto o = open_output(opts.output);
        auto s = open_output(side);
        std::size_t n_pairs = 0;
        std::size_t n_groups = 0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            const auto& levels = by_prompt[order[k]];
            const auto pairs = build_pairs(k, levels);
            for (const auto& p : pairs) o << pair_to_json(p, order[k]).dump() << '\n';
            n_pairs += pairs.size();
            if (pairs.empty()) {
                Json g;
                g["prompt"] = order[k];
                g["level"] = to_int(levels.front());
                std::vector<std::size_t> idx(levels.size());
                for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
                g["responses"] = idx;
                s << g.dump() << '\n';
                ++n_groups;
            }
        }
        out << "prompts=" << order.size() << " pairs=" << n_pairs << " promptwise=" << n_groups << '\n';
        return static_cast<int>(kOk);
    });
}

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        auto in = open_input(opts.config);
        Json j;
        try {
            j = Json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw CommandFailure{kUsage, "config is not valid JSON: " + std::string(e.what())};
        }
        ParsedConfig cfg = config_from_json(j);
        if (opts.seed) cfg.train.seed = *opts.seed;
        const fs::path dir = prepare_dir(opts.outdir);
        const TrainResult result = train(cfg.env, cfg.train);
        {
            auto csv = open_output(dir / "metrics.csv");
            write_metrics_csv(csv, result.records);
        }
        {
            auto pol = open_output(dir / "final_policy.json");
            pol << policy_to_json(result.final_policy).dump(2) << '\n';
        }
        if (cfg.write_svg || opts.svg) {
            auto svg = open_output(dir / "curves.svg");
            svg << curves_svg(result, to_string(cfg.train.algorithm));
        }
        if (result.diverged) {
            err << "error: training diverged at step " << result.diverged_at << ": " << result.diagnostic << '\n';
            return static_cast<int>(kNumerical);
        }
        out << "final accuracy: " << level1_mass(result.final_policy, cfg.env) << '\n';
        return static_cast<int>(kOk);
    });
}

const std::vector<std::string>& verify_suites() {
    static const std::vector<std::string> suites{"lemma1", "lemma2", "theorem1", "landscape", "fdcheck", "all"};
    return suites;
}

namespace {

constexpr std::size_t kRandomInstances = 20;
constexpr std::size_t kFdInstances = 100;

std::vector<Report> run_lemma2(const VerifyOptions& o) {
    std::vector<Report> reports{lemma_pa_is_pba(canonical_instance())};
    for (std::size_t k = 0; k < kRandomInstances; ++k) reports.push_back(lemma_pa_is_pba(random_instance(o.seed + k)));
    // Power check: the same certificate must fail away from the target.
    const Instance inst = canonical_instance();
    Rng rng(o.seed);
    RaggedTable noisy = inst.target().logits();
    std::normal_distribution<double> noise(0.0, 0.1);
    for (double& v : noisy.flat()) v += noise(rng);
    const auto g = pa_loss(Policy(inst.space, noisy), inst.ref, inst.prompts, inst.preference(), inst.beta);
    Report power{"pa-certificate-has-power", inst.name, {}, false};
    power.metrics["perturbation_sigma"] = 0.1;
    power.metrics["grad_max_norm"] = g.grad.max_abs();
    power.metrics["threshold"] = 1e-4;
    power.pass = g.grad.max_abs() > 1e-4;
    reports.push_back(power);
    reports.push_back(target_convergence(inst, OnlineObjective::kl, ConvergenceOptions{.seed = o.seed}));
    return reports;
}

std::vector<Report> run_lemma1(const VerifyOptions& o) {
    std::vector<Report> reports{lemma_online_dpo_not_pba(canonical_instance())};
    for (std::size_t k = 0; k < kRandomInstances; ++k) {
        reports.push_back(lemma_online_dpo_not_pba(random_instance(o.seed + k)));
    }
    Report guard{"degenerate-rewards-rejected", "canonical-constant", {}, false};
    try {
        lemma_online_dpo_not_pba(constant_reward_instance(canonical_instance()));
    } catch (const PreconditionError& e) {
        guard.pass = true;
        guard.metrics["message"] = e.what();
    }
    reports.push_back(guard);
    reports.push_back(decomposition_identity(100, o.seed));
    reports.push_back(
        target_convergence(canonical_instance(), OnlineObjective::cross_entropy, ConvergenceOptions{.seed = o.seed}));
    return reports;
}

std::vector<Report> run_theorem1(const VerifyOptions& o) {
    const Instance inst = canonical_instance();
    return {theorem1_sweep(inst, SweepOptions{.trials = o.trials, .seed = o.seed}),
            theorem1_sweep(inst, SweepOptions{.trials = o.trials, .seed = o.seed + 1, .adversarial = true}),
            appendix_lemmas(10000, o.seed)};
}

std::vector<Report> run_landscape(const VerifyOptions& o, const fs::path& dir) {
    const auto grid = landscape(o.grid);
    auto csv = open_output(dir / "landscape.csv");
    csv << "p,q,H,KL\n";
    csv.precision(17);
    for (const auto& pt : grid) csv << pt.p << ',' << pt.q << ',' << pt.cross_entropy << ',' << pt.kl << '\n';
    return {landscape_report(grid, o.grid)};
}

std::vector<Report> run_fdcheck(const VerifyOptions& o) {
    std::vector<Report> reports;
    for (const auto& id : fd_loss_ids()) reports.push_back(fd_check(id, kFdInstances, o.seed));
    return reports;
}

}  // namespace

int cmd_verify(const VerifyOptions& opts, std::ostream& out, std::ostream& err) {
    const auto& suites = verify_suites();
    if (std::find(suites.begin(), suites.end(), opts.suite) == suites.end()) {
        err << "error: unknown suite '" << opts.suite << "'\n";
        return kUsage;
    }
    if (opts.grid < 2) {
        err << "error: --grid must be at least 2\n";
        return kUsage;
    }
    return guarded(err, [&] {
        const fs::path dir = prepare_dir(opts.outdir);
        std::vector<std::string> names;
        if (opts.suite == "all") {
            names.assign(suites.begin(), suites.end() - 1);
        } else {
            names.push_back(opts.suite);
        }
        bool all_pass = true;
        for (const auto& name : names) {
            std::vector<Report> reports;
            if (name == "lemma1") reports = run_lemma1(opts);
            if (name == "lemma2") reports = run_lemma2(opts);
            if (name == "theorem1") reports = run_theorem1(opts);
            if (name == "landscape") reports = run_landscape(opts, dir);
            if (name == "fdcheck") reports = run_fdcheck(opts);
            Json arr = Json::array();
            for (const auto& r : reports) {
                arr.push_back(r.to_json());
                out << (r.pass ? "PASS " : "FAIL ") << name << ' ' << r.claim << ' ' << r.instance << '\n';
                all_pass = all_pass && r.pass;
            }
            auto f = open_output(dir / (name + ".json"));
            f << arr.dump(2) << '\n';
        }
        return static_cast<int>(all_pass ? kOk : kNumerical);
    });
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Preference-level policy optimisation toolkit"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    bool seed_given = false;

    ClassifyOptions classify_opts;
    auto* classify_cmd = app.add_subcommand("classify", "Assign preference levels to a JSONL corpus");
    classify_cmd->add_option("input", classify_opts.input, "Input JSONL")->required();
    classify_cmd->add_option("--out", classify_opts.output, "Output JSONL")->required();
    classify_cmd->add_option("--task", classify_opts.task, "Default task for rows without one")
        ->check(CLI::IsMember({"logic", "math"}));
    classify_cmd->add_option("--seed", seed, "Accepted for interface uniformity");

    PairsOptions pairs_opts;
    auto* pairs_cmd = app.add_subcommand("pairs", "Build preference pairs from a classified corpus");
    pairs_cmd->add_option("input", pairs_opts.input, "Classified JSONL")->required();
    pairs_cmd->add_option("--out", pairs_opts.output, "Pairs JSONL")->required();
    pairs_cmd->add_option("--promptwise", pairs_opts.promptwise, "Sidecar for uniform-level prompts");
    pairs_cmd->add_option("--seed", seed, "Accepted for interface uniformity");

    TrainOptions train_opts;
    auto* train_cmd = app.add_subcommand("train", "Run a training loop on a synthetic environment");
    train_cmd->add_option("config", train_opts.config, "Config JSON")->required();
    train_cmd->add_option("--out", train_opts.outdir, "Output directory")->required();
    auto* train_seed = train_cmd->add_option("--seed", seed, "Override the config seed");
    train_cmd->add_flag("--svg", train_opts.svg, "Also write curves.svg");

    VerifyOptions verify_opts;
    auto* verify_cmd = app.add_subcommand("verify", "Run numerical certification suites");
    verify_cmd->add_option("suite", verify_opts.suite, "lemma1|lemma2|theorem1|landscape|fdcheck|all")->required();
    verify_cmd->add_option("--out", verify_opts.outdir, "Report directory")->required();
    verify_cmd->add_option("--seed", verify_opts.seed, "Random seed");
    verify_cmd->add_option("--trials", verify_opts.trials, "Theorem sweep trials");
    verify_cmd->add_option("--grid", verify_opts.grid, "Landscape grid size");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("trpa");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        for (auto* sub : app.get_subcommands()) err << sub->help();
        return kUsage;
    }
    seed_given = train_seed->count() > 0;

    if (*classify_cmd) return cmd_classify(classify_opts, out, err);
    if (*pairs_cmd) return cmd_pairs(pairs_opts, out, err);
    if (*train_cmd) {
        if (seed_given) train_opts.seed = seed;
        return cmd_train(train_opts, out, err);
    }
    return cmd_verify(verify_opts, out, err);
}

}  // namespace trpa::cli
