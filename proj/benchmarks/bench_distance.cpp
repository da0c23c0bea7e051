#include <benchmark/benchmark.h>

#include "toothseg/distance_field.hpp"
#include "toothseg/rng.hpp"

using namespace toothseg;

namespace {

BinaryMask make_mask(int n) {
    BinaryMask m(GridGeom{{n, n, n}, {1, 1, 1}, {}});
    Rng rng(2);
    for (auto& v : m.data) v = rng.uniform() < 0.5 ? 1 : 0;
    m.data[0] = 0;
    return m;
}

void BM_ChamferDt(benchmark::State& state) {
    const BinaryMask m = make_mask(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(chamfer_dt(m));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m.data.size()));
}
BENCHMARK(BM_ChamferDt)->Arg(16)->Arg(64)->Arg(128);

void BM_RegressionTarget(benchmark::State& state) {
    const BinaryMask m = make_mask(64);
    for (auto _ : state) benchmark::DoNotOptimize(regression_target(m, 20.0));
}
BENCHMARK(BM_RegressionTarget);

}  // namespace
