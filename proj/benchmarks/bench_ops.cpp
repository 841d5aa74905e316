#include <benchmark/benchmark.h>

#include <random>

#include "posekit/heatmap.hpp"
#include "posekit/model.hpp"
#include "posekit/rand.hpp"

using namespace posekit;

namespace {

Tensor random_tensor(Shape4 s, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> v(static_cast<size_t>(s.numel()));
    for (double& x : v) x = next_uniform01(rng);
    return Tensor::from_data(s, std::move(v));
}

} // namespace

static void BM_PointwiseConv(benchmark::State& state) {
    const int64_t c = state.range(0);
    Tensor in = random_tensor({1, c, 16, 12}, 1);
    Tensor k = random_tensor({c, c, 1, 1}, 2);
    NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(in, k, std::nullopt, 1, 0, 1));
}
BENCHMARK(BM_PointwiseConv)->Arg(64)->Arg(128)->Arg(256);

static void BM_DepthwiseDeconv(benchmark::State& state) {
    const int64_t c = state.range(0);
    Tensor in = random_tensor({1, c, 8, 6}, 3);
    Tensor k = random_tensor({c, 1, 4, 4}, 4);
    NoGradGuard ng;
    for (auto _ : state)
        benchmark::DoNotOptimize(deconv2d(in, k, std::nullopt, 2, 1, static_cast<int>(c)));
}
BENCHMARK(BM_DepthwiseDeconv)->Arg(64)->Arg(128)->Arg(256);

static void BM_StandardDeconv(benchmark::State& state) {
    const int64_t c = state.range(0);
    Tensor in = random_tensor({1, c, 8, 6}, 5);
    Tensor k = random_tensor({c, c, 4, 4}, 6);
    NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(deconv2d(in, k, std::nullopt, 2, 1, 1));
}
BENCHMARK(BM_StandardDeconv)->Arg(64)->Arg(128);

static void BM_AttentionBlock(benchmark::State& state) {
    const int64_t c = state.range(0);
    Tensor f = random_tensor({1, c, 16, 12}, 7);
    std::mt19937_64 rng(8);
    AttentionWeights w = zero_attention_weights(static_cast<int>(c), 16);
    for (double& v : w.channel.squeeze_w.data()) v = next_gaussian(rng) * 0.1;
    for (double& v : w.channel.excite_w.data()) v = next_gaussian(rng) * 0.1;
    for (double& v : w.spatial.collapse_w.data()) v = next_gaussian(rng) * 0.1;
    for (double& v : w.spatial.conv_w.data()) v = next_gaussian(rng) * 0.1;
    NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(attention_block(f, w));
}
BENCHMARK(BM_AttentionBlock)->Arg(64)->Arg(256);

static void BM_TinyModelForward(benchmark::State& state) {
    ModelConfig cfg;
    cfg.input_h = 64;
    cfg.input_w = 64;
    cfg.in_channels = 3;
    cfg.num_joints = 5;
    cfg.backbone_channels = {16, 32, 64};
    cfg.head_layers = 2;
    cfg.head_channels = 32;
    cfg.squeeze_ratio = 8;
    PoseModel model = PoseModel::build(cfg, 9);
    Tensor in = random_tensor({1, 3, 64, 64}, 10);
    NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(model.forward(in, false));
}
BENCHMARK(BM_TinyModelForward);

static void BM_GaussianEncode(benchmark::State& state) {
    KeypointSet kps;
    kps.space = CoordSpace::heatmap;
    std::mt19937_64 rng(11);
    for (int j = 0; j < 17; ++j)
        kps.pts.push_back({next_uniform(rng, 4.0, 44.0), next_uniform(rng, 4.0, 60.0), 2});
    for (auto _ : state) benchmark::DoNotOptimize(gaussian_encode(kps, 64, 48, 2.0));
}
BENCHMARK(BM_GaussianEncode);

static void BM_Decode(benchmark::State& state) {
    KeypointSet kps;
    kps.space = CoordSpace::heatmap;
    std::mt19937_64 rng(12);
    for (int j = 0; j < 17; ++j)
        kps.pts.push_back({next_uniform(rng, 4.0, 44.0), next_uniform(rng, 4.0, 60.0), 2});
    const HeatmapStack maps = gaussian_encode(kps, 64, 48, 2.0).maps;
    for (auto _ : state) benchmark::DoNotOptimize(decode(maps));
}
BENCHMARK(BM_Decode);

BENCHMARK_MAIN();
