// Microbenchmarks for the numeric kernels dominating training time: the
// convolutional encoder, the attention/aggregation path, the partitioning
// step, the losses, and one full training iteration.

#include <benchmark/benchmark.h>

#include <random>

#include "rpt/losses.hpp"
#include "rpt/prototypes.hpp"
#include "rpt/rpt_model.hpp"
#include "rpt/train.hpp"

using namespace rpt;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = false) {
  long n = 1;
  for (int d : shape) n *= d;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> data(static_cast<size_t>(n));
  for (auto& v : data) v = u(rng);
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

Episode disk_episode(int S) {
  Episode ep;
  ep.support_image.resize(S, S);
  ep.query_image.resize(S, S);
  ep.support_mask.resize(S, S);
  ep.query_mask.resize(S, S);
  auto fill = [&](Image& img, Mask& m, double cx, double cy, double r) {
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        double d = std::hypot(x - cx, y - cy);
        m(y, x) = d < r ? 1 : 0;
        img(y, x) = (d < r ? 0.8 : 0.2) + 0.05 * std::sin(0.3 * x) * std::cos(0.2 * y);
      }
  };
  fill(ep.support_image, ep.support_mask, S * 0.47, S * 0.5, S * 0.33);
  fill(ep.query_image, ep.query_mask, S * 0.53, S * 0.48, S * 0.31);
  ep.class_id = 1;
  return ep;
}

void BM_conv2d_forward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = 64;
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({c, hw, hw}, rng);
  Tensor w = random_tensor({c, c * 9}, rng);
  Tensor b = random_tensor({c}, rng);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 3, 3, 2, 1));
}
BENCHMARK(BM_conv2d_forward)->Arg(8)->Arg(16)->Arg(32);

void BM_encoder_forward(benchmark::State& state) {
  const int S = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  nn::ParamStore ps;
  DeskEncoder enc(ps, EncoderConfig{16}, rng);
  Episode ep = disk_episode(S);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(enc.forward(ep.query_image, FeatureSource::kQuery));
}
BENCHMARK(BM_encoder_forward)->Arg(64)->Arg(128);

void BM_masked_average_pool(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const int c = 64, n = 1024;
  Tensor F = random_tensor({c, n}, rng);
  Tensor M = random_tensor({1, n}, rng);
  for (long i = 0; i < n; ++i) M.mutable_value()[i] = std::abs(M.value()[i]) + 0.01;
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(masked_average_pool(F, M));
}
BENCHMARK(BM_masked_average_pool);

void BM_voronoi_partition(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const int h = 16, w = 16;
  Mask m(h, w);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = rng() % 3 != 0;
  for (auto _ : state) benchmark::DoNotOptimize(voronoi_partition(m, 10, 7));
}
BENCHMARK(BM_voronoi_partition);

void BM_sf_aggregate(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const int nf = 10, c = 64;
  Tensor Ps = random_tensor({nf, c}, rng);
  Tensor Pq = random_tensor({1, c}, rng);
  SelectiveMap s = selective_map(affinity(Ps, Pq).value());
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(sf_aggregate(Ps, Pq, s));
}
BENCHMARK(BM_sf_aggregate);

void BM_bat_block_forward(benchmark::State& state) {
  std::mt19937_64 rng(6);
  const int width = 64, nf = 10;
  RptConfig cfg;
  nn::ParamStore ps;
  BaTBlock block(ps, "blk", width, cfg, rng);
  Tensor Pin = random_tensor({nf, width}, rng);
  Tensor Pq = random_tensor({1, width}, rng);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(block.forward(Pin, Pq, cfg));
}
BENCHMARK(BM_bat_block_forward);

void BM_signed_distance(benchmark::State& state) {
  const int S = static_cast<int>(state.range(0));
  Episode ep = disk_episode(S);
  for (auto _ : state) benchmark::DoNotOptimize(signed_distance(ep.query_mask));
}
BENCHMARK(BM_signed_distance)->Arg(64)->Arg(128);

void BM_combined_loss_backward(benchmark::State& state) {
  std::mt19937_64 rng(7);
  const int S = 64;
  Episode ep = disk_episode(S);
  Tensor pred = random_tensor({S, S}, rng, true);
  for (long i = 0; i < pred.size(); ++i)
    pred.mutable_value()[i] = 0.05 + 0.9 * std::abs(pred.value()[i]);
  for (auto _ : state) {
    LossBundle lb = combined_loss(pred, ep.query_mask, 10);
    lb.total_t.backward();
    benchmark::DoNotOptimize(lb.total);
  }
}
BENCHMARK(BM_combined_loss_backward);

void BM_episode_forward(benchmark::State& state) {
  const int S = static_cast<int>(state.range(0));
  TrainConfig cfg;
  cfg.width = 16;
  cfg.image_size = S;
  RptPipeline model = make_pipeline(cfg);
  Episode ep = disk_episode(S);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(model.run_episode(ep, 1));
}
BENCHMARK(BM_episode_forward)->Arg(64)->Arg(128);

void BM_train_iteration(benchmark::State& state) {
  const int S = 64;
  TrainConfig cfg;
  cfg.width = 16;
  cfg.image_size = S;
  cfg.iterations = 1;
  RptPipeline model = make_pipeline(cfg);
  Episode ep = disk_episode(S);
  for (auto _ : state) benchmark::DoNotOptimize(train_episodes(model, {ep}, cfg));
}
BENCHMARK(BM_train_iteration);

}  // namespace

BENCHMARK_MAIN();
