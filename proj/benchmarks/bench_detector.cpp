#include <benchmark/benchmark.h>

#include <vector>

#include "toothseg/detector.hpp"
#include "toothseg/rng.hpp"

using namespace toothseg;

namespace {

std::vector<Box3> make_boxes(int n) {
    Rng rng(3);
    std::vector<Box3> boxes;
    for (int i = 0; i < n; ++i) {
        Box3 b;
        b.min_mm = {rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(0, 40)};
        b.max_mm = b.min_mm + Vec3{rng.uniform(2, 8), rng.uniform(2, 8), rng.uniform(2, 8)};
        b.score = rng.uniform();
        boxes.push_back(b);
    }
    return boxes;
}

void BM_Nms(benchmark::State& state) {
    const auto boxes = make_boxes(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(nms(boxes, 0.3));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Nms)->Arg(100)->Arg(1000);

void BM_SampleRpnTargets(benchmark::State& state) {
    AnchorGrid grid;
    grid.extent.min_mm = {0, 0, 0};
    grid.extent.max_mm = {45, 38, 29};
    const auto anchors = grid.generate();
    const auto gt = make_boxes(28);
    SamplerConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(sample_rpn_targets(anchors, gt, cfg));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(anchors.size()));
}
BENCHMARK(BM_SampleRpnTargets);

void BM_OverlapRatio(benchmark::State& state) {
    const auto boxes = make_boxes(28);
    std::vector<Box3> others(boxes.begin() + 1, boxes.end());
    for (auto _ : state)
        benchmark::DoNotOptimize(overlap_ratio(boxes.front(), others, 0.1));
}
BENCHMARK(BM_OverlapRatio);

}  // namespace
