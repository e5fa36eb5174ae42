#include <algorithm>
#include <map>

#include <benchmark/benchmark.h>

#include "gridlearn/experiment.hpp"
#include "gridlearn/line_estimator.hpp"
#include "gridlearn/missing_learner.hpp"
#include "gridlearn/moments.hpp"
#include "gridlearn/topology_learner.hpp"

using namespace gridlearn;

namespace {

const SyntheticFeeder& feeder(int loads) {
    static std::map<int, SyntheticFeeder> cache;
    auto it = cache.find(loads);
    if (it == cache.end()) {
        FeederSpec spec = feeder_preset("bus_83_11");
        spec.loads = loads;
        spec.substations = std::min(11, loads);
        it = cache.emplace(loads, synth_feeder(spec, InjectionRanges{}, 5)).first;
    }
    return it->second;
}

void BM_SampleVoltages(benchmark::State& state) {
    const auto& f = feeder(72);
    const int m = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto s = sample_voltages(f.forest, f.injections, m, 1);
        benchmark::DoNotOptimize(s.eps.data());
    }
    state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(BM_SampleVoltages)->Arg(1000)->Arg(16000)->Unit(benchmark::kMillisecond);

void BM_AnalyticMoments(benchmark::State& state) {
    const auto& f = feeder(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(analytic_moments(f.forest, f.injections));
}
BENCHMARK(BM_AnalyticMoments)->Arg(20)->Arg(72)->Arg(200)->Unit(benchmark::kMicrosecond);

void BM_LearnStructure(benchmark::State& state) {
    const auto& f = feeder(static_cast<int>(state.range(0)));
    const auto ms = MomentSet::from_analytic(analytic_moments(f.forest, f.injections));
    const auto subs = substation_children(f.forest);
    for (auto _ : state) benchmark::DoNotOptimize(learn_structure(ms, f.forest.index(), subs));
}
BENCHMARK(BM_LearnStructure)->Arg(20)->Arg(72)->Arg(200)->Unit(benchmark::kMicrosecond);

void BM_LearnStructureFromSamples(benchmark::State& state) {
    const auto& f = feeder(72);
    const auto samples = sample_voltages(f.forest, f.injections, static_cast<int>(state.range(0)), 3);
    const auto subs = substation_children(f.forest);
    for (auto _ : state) {
        const auto ms = MomentSet::from_samples(samples);
        benchmark::DoNotOptimize(learn_structure(ms, f.forest.index(), subs));
    }
}
BENCHMARK(BM_LearnStructureFromSamples)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_EstimateInjectionStats(benchmark::State& state) {
    const auto& f = feeder(72);
    const auto ms = MomentSet::from_analytic(analytic_moments(f.forest, f.injections));
    for (auto _ : state) benchmark::DoNotOptimize(estimate_injection_stats(ms, f.forest));
}
BENCHMARK(BM_EstimateInjectionStats)->Unit(benchmark::kMicrosecond);

void BM_EstimateEdge(benchmark::State& state) {
    const auto st = predict_edge_statistics(0.02, 0.035, {1.3, 0.7, 0.4});
    for (auto _ : state) benchmark::DoNotOptimize(estimate_edge(st.eps, st.theta, st.cross, 1.3, 0.7));
}
BENCHMARK(BM_EstimateEdge);

void BM_LearnWithMissing(benchmark::State& state) {
    const auto& f = feeder(72);
    const auto hidden = random_missing_set(f.forest, static_cast<int>(state.range(0)), 9);
    std::vector<int> observed;
    for (int a = 0; a < f.forest.num_loads(); ++a) {
        if (!std::binary_search(hidden.begin(), hidden.end(), a)) observed.push_back(a);
    }
    const auto ms = MomentSet::from_analytic(analytic_moments(f.forest, f.injections), observed);
    const LineCatalog catalog(f.network, f.forest.index());
    const auto subs = substation_children(f.forest);
    for (auto _ : state) {
        benchmark::DoNotOptimize(learn_with_missing(ms, f.forest.index(), hidden, f.injections, catalog, subs));
    }
}
BENCHMARK(BM_LearnWithMissing)->Arg(1)->Arg(4)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
