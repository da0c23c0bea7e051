#include <benchmark/benchmark.h>

#include "toothseg/rng.hpp"
#include "toothseg/volume.hpp"

using namespace toothseg;

namespace {

Volume make_volume(int n) {
    Volume v(GridGeom{{n, n, n}, {0.4, 0.4, 0.4}, {}});
    Rng rng(1);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform());
    return v;
}

void BM_MipX(benchmark::State& state) {
    const Volume v = make_volume(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(mip_x(v));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(v.data.size()));
}
BENCHMARK(BM_MipX)->Arg(64)->Arg(128);

void BM_Normalize01(benchmark::State& state) {
    const Volume v = make_volume(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(normalize01(v));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(v.data.size()));
}
BENCHMARK(BM_Normalize01)->Arg(64)->Arg(128);

void BM_ResampleRigid(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Volume v = make_volume(n);
    const RigidTransform t =
        RigidTransform::about_x(12.0, {0, n * 0.2, n * 0.2});
    for (auto _ : state) benchmark::DoNotOptimize(resample(v, t, v.geom, Interp::Trilinear));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(v.data.size()));
}
BENCHMARK(BM_ResampleRigid)->Arg(64)->Arg(128);

}  // namespace
