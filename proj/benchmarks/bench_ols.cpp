#include <benchmark/benchmark.h>

#include "randadj/ols.hpp"
#include "randadj/rng.hpp"

namespace {

using namespace randadj;

DesignMatrix random_design(Eigen::Index n, Eigen::Index q, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXi z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.bernoulli(0.2) ? 1 : 0;
    Eigen::MatrixXd w(n, q);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < q; ++c) w(i, c) = rng.normal();
    }
    std::vector<std::string> names;
    for (Eigen::Index c = 0; c < q; ++c) names.push_back("x" + std::to_string(c + 1));
    return build_interacted(z, w, names);
}

void BM_fit(benchmark::State& state) {
    const auto n = static_cast<Eigen::Index>(state.range(0));
    const auto q = static_cast<Eigen::Index>(state.range(1));
    const DesignMatrix design = random_design(n, q, 42);
    Rng rng(7);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit(design, y));
    }
}
BENCHMARK(BM_fit)->Args({500, 6})->Args({10000, 6})->Args({10000, 19});

void BM_fit_and_cov(benchmark::State& state) {
    const auto n = static_cast<Eigen::Index>(state.range(0));
    const DesignMatrix design = random_design(n, 6, 42);
    Rng rng(7);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = rng.normal();
    for (auto _ : state) {
        const OlsFit f = fit(design, y);
        benchmark::DoNotOptimize(robust_cov(f, CovFlavor::HC0));
    }
}
BENCHMARK(BM_fit_and_cov)->Arg(500)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
