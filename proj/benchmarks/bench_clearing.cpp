#include "p2pfair/clearing_fair.hpp"
#include "p2pfair/scenario.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace p2pfair;

namespace {

const Scenario& desk_scenario() {
    static const Scenario s = load_scenario(P2PFAIR_DATA_DIR "/scenarios/desk_high.json");
    return s;
}

void BM_WassersteinLp(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::vector<double> a(static_cast<std::size_t>(state.range(0))), b(a.size());
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    for (auto _ : state) benchmark::DoNotOptimize(wasserstein_lp(a, b).distance);
}
BENCHMARK(BM_WassersteinLp)->Arg(12)->Arg(44)->Unit(benchmark::kMillisecond);

void BM_WassersteinSorted(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::vector<double> a(static_cast<std::size_t>(state.range(0))), b(a.size());
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    for (auto _ : state) benchmark::DoNotOptimize(wasserstein_sorted_oracle(a, b));
}
BENCHMARK(BM_WassersteinSorted)->Arg(12)->Arg(44);

void BM_ReferenceClearing(benchmark::State& state) {
    const auto& s = desk_scenario();
    const auto& peers = s.slots[static_cast<std::size_t>(state.range(0))];
    const BidMatch bids = build_bid_match(peers);
    const ClearingContext ctx{peers, bids, s.grid, s.partition};
    for (auto _ : state) benchmark::DoNotOptimize(clear_reference(ctx).objective);
}
BENCHMARK(BM_ReferenceClearing)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_FairClearing(benchmark::State& state) {
    const auto& s = desk_scenario();
    const auto& peers = s.slots[static_cast<std::size_t>(state.range(0))];
    const BidMatch bids = build_bid_match(peers);
    const ClearingContext ctx{peers, bids, s.grid, s.partition};
    const auto reference = clear_reference(ctx);
    for (auto _ : state) benchmark::DoNotOptimize(alternating_solve(FairInputs{ctx, reference, 0.5}).d_max);
}
BENCHMARK(BM_FairClearing)->Arg(12)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
