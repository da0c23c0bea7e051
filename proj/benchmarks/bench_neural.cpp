#include <benchmark/benchmark.h>

#include "toothseg/neural.hpp"
#include "toothseg/rng.hpp"

using namespace toothseg;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
    std::int64_t n = 1;
    for (int s : shape) n *= s;
    Rng rng(seed);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = rng.uniform(-1, 1);
    return Tensor::from(std::move(shape), std::move(data));
}

void BM_Conv3dGrouped(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const Tensor x = random_tensor({c, 16, 16, 32}, 4);
    const Tensor w = random_tensor({c, c / 4, 3, 3, 3}, 5);
    NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(conv3d(x, w, {}, 1, 1, 4));
}
BENCHMARK(BM_Conv3dGrouped)->Arg(8)->Arg(16);

void BM_TsnetForwardToy(benchmark::State& state) {
    TsnetParams params = make_tsnet({4, 8, 16, 32}, 4, 6);
    const Tensor x = random_tensor({1, 16, 16, 32}, 7);
    NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(tsnet_forward(x, params, NetMode::Eval));
}
BENCHMARK(BM_TsnetForwardToy);

void BM_TrainStepToy(benchmark::State& state) {
    TsnetParams params = make_tsnet({4, 8, 16, 32}, 4, 8);
    std::vector<std::pair<Tensor, Tensor>> batch{
        {random_tensor({1, 16, 16, 32}, 9), random_tensor({1, 16, 16, 32}, 10)}};
    for (auto _ : state) benchmark::DoNotOptimize(train_step(params, batch, 1e-4, 0.1));
}
BENCHMARK(BM_TrainStepToy);

}  // namespace
