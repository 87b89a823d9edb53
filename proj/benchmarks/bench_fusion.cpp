#include <benchmark/benchmark.h>

#include "eqgan/fusion.hpp"
#include "eqgan/generator.hpp"
#include "eqgan/metrics.hpp"

using namespace eqgan;

static void BM_SimilarityMap(benchmark::State& state) {
  const int64_t side = state.range(0);
  torch::manual_seed(0);
  const auto a = torch::randn({64, side, side});
  const auto b = torch::randn({64, side, side});
  for (auto _ : state) benchmark::DoNotOptimize(fusion::similarity_map(a, b));
}
BENCHMARK(BM_SimilarityMap)->Arg(4)->Arg(8)->Arg(16);

static void BM_LocalFuse(benchmark::State& state) {
  const int64_t k = state.range(0);
  torch::manual_seed(0);
  Rng rng(0);
  const auto features = torch::randn({k, 256, 4, 4});
  const auto plan = fusion::sample_plan(k, rng);
  for (auto _ : state) benchmark::DoNotOptimize(fusion::local_fuse(features, plan).fused);
}
BENCHMARK(BM_LocalFuse)->Arg(3)->Arg(5)->Arg(9);

static void BM_MultiScale(benchmark::State& state) {
  torch::manual_seed(0);
  fusion::MultiScale m(fusion::MultiScaleOptions{.channels = 32, .height = 16, .width = 16});
  const auto x = torch::randn({3, 32, 16, 16});
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(m->forward(x));
}
BENCHMARK(BM_MultiScale);

static void BM_GeneratorForward(benchmark::State& state) {
  const int64_t size = state.range(0);
  torch::manual_seed(0);
  Rng rng(0);
  GeneratorConfig config;
  config.image_size = size;
  config.channel_plan = {8, 16, 32, 32, 64};
  Generator g(config);
  g->eval();
  const auto tasks = torch::rand({1, 3, 3, size, size}) * 2 - 1;
  const std::vector<fusion::FusionPlan> plans{fusion::sample_plan(3, rng)};
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(g->generate(tasks, plans).images);
}
BENCHMARK(BM_GeneratorForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_Fid(benchmark::State& state) {
  const int64_t dim = state.range(0);
  torch::manual_seed(0);
  const auto a = torch::randn({256, dim}, torch::kFloat64);
  const auto b = torch::randn({256, dim}, torch::kFloat64) + 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(metrics::fid(a, b));
}
BENCHMARK(BM_Fid)->Arg(112)->Arg(512)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
