#include "lsm/lae.hpp"
#include "lsm/metrics.hpp"
#include "lsm/model.hpp"
#include "lsm/msfm.hpp"
#include "lsm/nms.hpp"
#include "lsm/rfa.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

void BM_LAE(benchmark::State& state) {
  const auto c = state.range(0);
  lsm::LAEConfig cfg;
  cfg.in_channels = c;
  cfg.out_channels = 2 * c;
  lsm::LAE lae(cfg);
  lae->eval();
  torch::NoGradGuard g;
  auto x = torch::randn({1, c, 80, 80});
  for (auto _ : state) benchmark::DoNotOptimize(lae->forward(x));
}
BENCHMARK(BM_LAE)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_MSFM(benchmark::State& state) {
  const auto c = state.range(0);
  lsm::MSFMConfig cfg;
  cfg.channels = c;
  lsm::MSFM m(cfg);
  m->eval();
  torch::NoGradGuard g;
  auto x = torch::randn({1, c, 40, 40});
  for (auto _ : state) benchmark::DoNotOptimize(m->forward(x));
}
BENCHMARK(BM_MSFM)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_RFAConv(benchmark::State& state) {
  lsm::RFAConfig cfg;
  cfg.in_channels = 16;
  cfg.out_channels = 16;
  lsm::RFAConv conv(cfg);
  conv->eval();
  torch::NoGradGuard g;
  auto x = torch::randn({1, 16, state.range(0), state.range(0)});
  for (auto _ : state) benchmark::DoNotOptimize(conv->forward(x));
}
BENCHMARK(BM_RFAConv)->Arg(80)->Arg(160)->Unit(benchmark::kMillisecond);

void BM_DetectorForward(benchmark::State& state) {
  lsm::ModelConfig cfg;
  cfg.input_size = state.range(0);
  auto model = lsm::build_model(cfg);
  model->eval();
  torch::NoGradGuard g;
  auto x = torch::rand({1, 3, cfg.input_size, cfg.input_size});
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(x));
}
BENCHMARK(BM_DetectorForward)->Arg(320)->Arg(640)->Unit(benchmark::kMillisecond);

std::vector<lsm::EvalImage> random_images(int n) {
  std::mt19937 rng(0);
  std::uniform_real_distribution<double> p(0, 600), s(8, 120), sc(0, 1);
  std::vector<lsm::EvalImage> out(static_cast<std::size_t>(n));
  for (auto& im : out) {
    for (int k = 0; k < 20; ++k) {
      const double x = p(rng), y = p(rng);
      lsm::Box b{x, y, x + s(rng), y + s(rng)};
      im.ground_truth.push_back({b, k % 3});
      im.detections.push_back({lsm::Box{b.x1 + 2, b.y1 - 1, b.x2 + 3, b.y2}, sc(rng), k % 3});
      im.detections.push_back({lsm::Box{y, x, y + 30, x + 30}, sc(rng), k % 3});
    }
  }
  return out;
}

void BM_Evaluate(benchmark::State& state) {
  auto images = random_images(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(lsm::evaluate(images, {"a", "b", "c"}));
}
BENCHMARK(BM_Evaluate)->Arg(72)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_Nms(benchmark::State& state) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> p(0, 600), s(8, 60), sc(0, 1);
  lsm::ImageDetections dets;
  for (int i = 0; i < state.range(0); ++i) {
    const double x = p(rng), y = p(rng);
    dets.push_back({lsm::Box{x, y, x + s(rng), y + s(rng)}, sc(rng), i % 3});
  }
  for (auto _ : state) benchmark::DoNotOptimize(lsm::nms(dets));
}
BENCHMARK(BM_Nms)->Arg(1000)->Arg(3000);

}  // namespace

BENCHMARK_MAIN();
