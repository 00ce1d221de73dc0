#include <benchmark/benchmark.h>

#include "magnetokernel/estimator.hpp"
#include "magnetokernel/fields.hpp"
#include "magnetokernel/paths.hpp"
#include "magnetokernel/stochint.hpp"

using namespace mk;

static void BM_SampleBridge(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::vector<Vec> buf;
    std::uint64_t i = 0;
    for (auto _ : state) {
        paths::sample_bridge_into(buf, n, 3, 42, i++);
        benchmark::DoNotOptimize(buf.data());
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SampleBridge)->Arg(64)->Arg(256)->Arg(1024);

static void BM_SampleField2D(benchmark::State& state) {
    const auto grid = fields::GridSpec::centered_box(2, 8.0, 16.0 / state.range(0));
    const auto spec = fields::CovarianceSpec::bounded_isotropic(1.0, 1.0, true);
    std::uint64_t i = 0;
    for (auto _ : state) {
        auto sample = fields::sample_field(spec, grid, 7, i++);
        benchmark::DoNotOptimize(sample.values.data());
    }
}
BENCHMARK(BM_SampleField2D)->Arg(64)->Arg(128)->Arg(256);

static void BM_FieldEvaluate(benchmark::State& state) {
    const auto grid = fields::GridSpec::centered_box(3, 8.0, 0.25);
    const auto spec = fields::CovarianceSpec::bounded_isotropic(1.0, 1.0, true);
    const auto sample = fields::sample_field(spec, grid, 7, 0);
    double x = -7.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample.evaluate(vec(x, 0.3 * x, -0.2 * x)));
        x += 0.37;
        if (x > 7.0) x = -7.0;
    }
}
BENCHMARK(BM_FieldEvaluate);

static void BM_KernelFixedField(benchmark::State& state) {
    const PhysParams params = PhysParams::natural(2);
    const auto grid = fields::GridSpec::centered_box(2, 8.0, 0.25);
    const auto sample =
        fields::sample_field(fields::CovarianceSpec::bounded_isotropic(1.0, 1.0, true), grid, 3, 0);
    const estimator::McBudget budget{static_cast<long>(state.range(0)), 128};
    for (auto _ : state) {
        auto est = estimator::kernel_fixed_field(sample, estimator::ScalarPotential::zero(),
                                                 vec(0, 0), vec(1, 0), 1.0, budget, params, 9, 1);
        benchmark::DoNotOptimize(est.mean);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KernelFixedField)->Arg(256)->Arg(1024);

static void BM_GaussianAverageTable(benchmark::State& state) {
    const PhysParams params = PhysParams::natural(2);
    const auto grid = fields::GridSpec::centered_box(2, 8.0, 0.25);
    const auto cov = fields::PairCovariance::for_spec(
        fields::CovarianceSpec::bounded_isotropic(1.0, 1.0, true), &grid);
    const estimator::McBudget budget{static_cast<long>(state.range(0)), 64};
    for (auto _ : state) {
        auto est = estimator::kernel_gaussian_average(cov, estimator::ScalarPotential::zero(),
                                                      vec(0, 0), vec(1, 0), 1.0, budget, params,
                                                      9, 1);
        benchmark::DoNotOptimize(est.mean);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GaussianAverageTable)->Arg(64)->Arg(256);

static void BM_VarianceDecomposition(benchmark::State& state) {
    const PhysParams params = PhysParams::natural(2);
    const auto bridge = paths::sample_bridge(static_cast<int>(state.range(0)), 2, 5, 0);
    const auto path = paths::make_space_path(bridge, vec(0, 0), vec(1, 0), 1.0, params);
    const auto g = [](const Vec& a, const Vec& b) {
        return Mat::diagonal(std::exp(-norm2(a - b)), 2);
    };
    for (auto _ : state) {
        auto d = stochint::variance_decomposition(g, path);
        benchmark::DoNotOptimize(d.total);
    }
}
BENCHMARK(BM_VarianceDecomposition)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
