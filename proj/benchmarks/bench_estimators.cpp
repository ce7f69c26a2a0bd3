#include <benchmark/benchmark.h>

#include "randadj/estimators.hpp"
#include "randadj/simulation.hpp"

namespace {

using namespace randadj;

ExperimentData scenario_data(Eigen::Index n) {
    const PotentialPopulation pop = gen_scenario(Scenario::II, n, 99);
    const Eigen::VectorXi z = complete_randomization(n, n / 5, 123);
    return reveal(pop, z);
}

void BM_estimate(benchmark::State& state, Strategy strategy) {
    const ExperimentData data = scenario_data(state.range(0));
    EstimatorSpec spec;
    spec.strategy = strategy;
    spec.collect_diagnostics = false;
    for (auto _ : state) {
        benchmark::DoNotOptimize(estimate(data, spec));
    }
}
BENCHMARK_CAPTURE(BM_estimate, mim, Strategy::Mim)->Arg(500)->Arg(10000);
BENCHMARK_CAPTURE(BM_estimate, mp, Strategy::Mp)->Arg(500)->Arg(10000);
BENCHMARK_CAPTURE(BM_estimate, mp_aggregate, Strategy::MpAggregate)->Arg(500)->Arg(10000);

void BM_frt(benchmark::State& state) {
    const ExperimentData data = scenario_data(500);
    EstimatorSpec spec;
    spec.strategy = Strategy::Mim;
    for (auto _ : state) {
        benchmark::DoNotOptimize(frt_studentized(data, spec, 200, 5));
    }
}
BENCHMARK(BM_frt);

}  // namespace
