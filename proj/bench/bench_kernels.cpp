// Serial reference kernels against their OpenMP counterparts.
#include "cal/kernels.hpp"
#include "cal/mixture.hpp"
#include "cal/synth.hpp"

#include <benchmark/benchmark.h>

#include <map>
#include <memory>

namespace {

struct Fixture {
    cal::Dataset data;
    std::shared_ptr<const cal::MixtureModel> mixture;
};

const Fixture& fixture(std::size_t n) {
    static std::map<std::size_t, Fixture> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        Fixture f;
        f.data = cal::synth::generate("clouds", n, 0.1, 7);
        cal::VIConfig vi;
        vi.restarts = 1;
        f.mixture = std::make_shared<const cal::MixtureModel>(cal::fit_vi(f.data.rows, f.data.schema, vi));
        it = cache.emplace(n, std::move(f)).first;
    }
    return it->second;
}

cal::KernelSpec spec(const Fixture& f, bool rwm) {
    cal::KernelSpec k;
    k.kind = rwm ? cal::KernelKind::rwm : cal::KernelKind::rbf;
    k.gamma = 0.5;
    k.mixture = f.mixture;
    return k;
}

void BM_gram_reference(benchmark::State& state) {
    const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
    auto k = spec(f, state.range(1) != 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cal::kernels::reference::gram(k, f.data.schema, f.data.rows));
    }
}

void BM_gram_parallel(benchmark::State& state) {
    const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
    auto k = spec(f, state.range(1) != 0);
    for (auto _ : state) {
        auto p = cal::kernels::prepare(k, f.data.rows);
        benchmark::DoNotOptimize(cal::kernels::gram(k, f.data.schema, p));
    }
}

void BM_responsibilities_reference(benchmark::State& state) {
    const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(cal::kernels::reference::responsibilities(*f.mixture, f.data.rows));
    }
}

void BM_responsibilities_parallel(benchmark::State& state) {
    const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(cal::kernels::responsibilities(*f.mixture, f.data.rows));
    }
}

}  // namespace

// second argument: 0 = RBF, 1 = RWM
BENCHMARK(BM_gram_reference)->ArgsProduct({{250, 1000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gram_parallel)->ArgsProduct({{250, 1000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_responsibilities_reference)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_responsibilities_parallel)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
