#include <benchmark/benchmark.h>

#include <random>

#include "emofuse/face.hpp"
#include "emofuse/fusion.hpp"
#include "emofuse/losses.hpp"
#include "emofuse/metrics.hpp"

using namespace emofuse;

namespace {

ScoredSet random_scored_set(size_t m, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ScoredSet s;
    s.scores.reserve(m);
    s.labels.reserve(m);
    for (size_t i = 0; i < m; ++i) {
        s.scores.push_back(unit(rng));
        s.labels.push_back(rng() % 4 == 0);
    }
    s.labels[0] = 1;
    return s;
}

void bm_average_precision(benchmark::State& state) {
    const auto s = random_scored_set(static_cast<size_t>(state.range(0)), 7);
    for (auto _ : state) benchmark::DoNotOptimize(average_precision(s));
}
BENCHMARK(bm_average_precision)->Arg(1000)->Arg(100000);

void bm_eq_pr_threshold(benchmark::State& state) {
    const auto s = random_scored_set(static_cast<size_t>(state.range(0)), 11);
    for (auto _ : state) benchmark::DoNotOptimize(eq_pr_threshold(s));
}
BENCHMARK(bm_eq_pr_threshold)->Arg(1000)->Arg(10000);

void bm_enhance(benchmark::State& state) {
    Image face = Image::solid_gray(48, 48, 100);
    std::mt19937_64 rng(3);
    for (auto& p : face.pixels) p = uint8_t(rng() & 0xFF);
    for (auto _ : state) benchmark::DoNotOptimize(enhance(face));
}
BENCHMARK(bm_enhance);

void bm_extract_face(benchmark::State& state) {
    Image body;
    body.width = body.height = 128;
    body.channels = 3;
    body.pixels.resize(128 * 128 * 3);
    std::mt19937_64 rng(5);
    for (auto& p : body.pixels) p = uint8_t(rng() & 0xFF);
    const StubDetector detector = StubDetector::center();
    for (auto _ : state) benchmark::DoNotOptimize(extract_face(body, detector));
}
BENCHMARK(bm_extract_face);

void bm_fusion_forward_backward(benchmark::State& state) {
    const int input_dim = static_cast<int>(state.range(0));
    const FusionParams params = init_fusion({input_dim, 256, 0.5, 1});
    std::vector<double> x(input_dim);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (double& v : x) v = unit(rng);
    std::vector<double> gd(kNumCategories, 0.5), gc(3, 0.5);
    for (auto _ : state) {
        ForwardCache cache;
        benchmark::DoNotOptimize(
            fusion_forward(params, x, FusionMode::train, 123, &cache));
        benchmark::DoNotOptimize(fusion_backward(params, cache, gd, gc));
    }
}
BENCHMARK(bm_fusion_forward_backward)->Arg(48)->Arg(3328);

void bm_disc_loss(benchmark::State& state) {
    std::array<double, kNumCategories> pred{};
    DiscreteLabel target;
    DiscreteLossWeights w;
    w.c = 1.2;
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int i = 0; i < kNumCategories; ++i) {
        pred[i] = unit(rng);
        target.bits[i] = rng() % 2;
        w.w[i] = 1.0 + std::abs(unit(rng));
    }
    for (auto _ : state) benchmark::DoNotOptimize(disc_loss(pred, target, w));
}
BENCHMARK(bm_disc_loss);

}  // namespace

BENCHMARK_MAIN();
