#include <benchmark/benchmark.h>

#include <random>

#include "trpa/losses.hpp"
#include "trpa/rules.hpp"
#include "trpa/verify.hpp"

namespace {

using namespace trpa;

Policy random_policy(const SpacePtr& space, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    RaggedTable z(space->widths());
    for (double& v : z.flat()) v = n(rng);
    return Policy(space, z);
}

// One prompt per batch entry, `width` responses each.
SpacePtr square_space(std::size_t prompts, std::size_t width) {
    return Space::anonymous(std::vector<std::size_t>(prompts, width));
}

void BM_PaLoss(benchmark::State& state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    auto space = square_space(4, width);
    const auto ref = random_policy(space, 1);
    const auto theta = random_policy(space, 2);
    RaggedTable r(space->widths());
    for (std::size_t x = 0; x < r.rows(); ++x)
        for (std::size_t y = 0; y < width; ++y) r.at(x, y) = static_cast<double>(y % 3);
    const auto pref = PreferenceModel::bradley_terry(RewardTable(space, r));
    const auto d = PromptDist::uniform(4);
    for (auto _ : state) benchmark::DoNotOptimize(pa_loss(theta, ref, d, pref, 1.0));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PaLoss)->RangeMultiplier(2)->Range(4, 64)->Complexity(benchmark::oNSquared);

void BM_TrpaLossExact(benchmark::State& state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    auto space = square_space(4, width);
    const auto ref = random_policy(space, 1);
    const auto old_p = random_policy(space, 3);
    const auto theta = random_policy(space, 2);
    LevelTable levels(4);
    for (auto& row : levels)
        for (std::size_t y = 0; y < width; ++y) row.push_back(level_from_int(static_cast<int>(y % 4) + 1));
    const auto d = PromptDist::uniform(4);
    const auto dist = exact_pair_distribution(old_p, d, levels);
    const TrpaConfig cfg{KtpoConfig{0.1, 2.0}, 1.0, EvalMode::exact};
    for (auto _ : state) benchmark::DoNotOptimize(trpa_loss(theta, ref, old_p, d, dist.pairs, cfg, dist.weights));
}
BENCHMARK(BM_TrpaLossExact)->RangeMultiplier(2)->Range(4, 64);

void BM_GrpoLoss(benchmark::State& state) {
    const auto g = static_cast<std::size_t>(state.range(0));
    auto space = square_space(4, 8);
    const auto ref = random_policy(space, 1);
    const auto old_p = random_policy(space, 3);
    const auto theta = random_policy(space, 2);
    std::mt19937_64 rng(4);
    std::vector<RolloutGroup> groups;
    for (std::size_t x = 0; x < 4; ++x) {
        RolloutGroup grp{x, {}, {}};
        for (std::size_t k = 0; k < g; ++k) {
            grp.responses.push_back(rng() % 8);
            grp.rewards.push_back(static_cast<double>(rng() % 3));
        }
        groups.push_back(grp);
    }
    for (auto _ : state) benchmark::DoNotOptimize(grpo_loss(theta, old_p, ref, groups, 0.2, 0.01));
}
BENCHMARK(BM_GrpoLoss)->RangeMultiplier(4)->Range(4, 256);

void BM_Classify(benchmark::State& state) {
    const ResponseRecord rec{"p",
                             "<think>Henry says Jack is a knave, so consider both cases carefully.</think>"
                             "<answer>(1) Henry is a knight, (2) Jack is a knave</answer>",
                             "(1) Henry is a knight, (2) Jack is a knave", TaskKind::logic};
    for (auto _ : state) benchmark::DoNotOptimize(classify(rec));
}
BENCHMARK(BM_Classify);

void BM_TheoremSweep(benchmark::State& state) {
    const auto inst = canonical_instance();
    for (auto _ : state) {
        benchmark::DoNotOptimize(theorem1_sweep(inst, SweepOptions{.trials = 100, .seed = 0}));
    }
}
BENCHMARK(BM_TheoremSweep);

}  // namespace

BENCHMARK_MAIN();
