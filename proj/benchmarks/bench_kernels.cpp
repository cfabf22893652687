#include <benchmark/benchmark.h>

#include "orthonet/jacobian_lab.hpp"
#include "orthonet/layers.hpp"
#include "orthonet/ortho_init.hpp"
#include "orthonet/regularization.hpp"
#include "orthonet/trainer.hpp"

using namespace orthonet;

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = gaussian(rng, {n, n}, 0, 1), b = gaussian(rng, {n, n}, 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

static ConvLayer conv(std::size_t c, std::size_t m, std::size_t stride, Rng& rng) {
  return ConvLayer{msra_init(3, 3, c, m, rng), stride, 1};
}

static void BM_ConvForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), hw = 32 * 16 / c;
  Rng rng(2);
  const ConvLayer layer = conv(c, c, 1, rng);
  const Tensor x = gaussian(rng, {32, c, hw, hw}, 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(conv_forward(layer, x));
}
BENCHMARK(BM_ConvForward)->Arg(16)->Arg(32)->Arg(64);

static void BM_ConvBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), hw = 32 * 16 / c;
  Rng rng(3);
  const ConvLayer layer = conv(c, c, 1, rng);
  const Tensor x = gaussian(rng, {32, c, hw, hw}, 0, 1);
  const Tensor d = gaussian(rng, conv_output_shape(layer, x.shape()), 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(conv_backward(layer, x, d));
}
BENCHMARK(BM_ConvBackward)->Arg(16)->Arg(64);

static void BM_BatchNorm(benchmark::State& state) {
  Rng rng(4);
  BatchNormState bn = make_batch_norm(16);
  const Tensor x = gaussian(rng, {128, 16, 32, 32}, 0, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bn_forward(bn, x, true));
    benchmark::DoNotOptimize(bn_backward(bn, x));
  }
}
BENCHMARK(BM_BatchNorm);

static void BM_OrthoGrad(benchmark::State& state) {
  Rng rng(5);
  const Tensor w = msra_init(3, 3, 64, 64, rng).matrix();
  for (auto _ : state) benchmark::DoNotOptimize(ortho_grad(w, 1e-4));
}
BENCHMARK(BM_OrthoGrad);

static void BM_EigSym(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  std::vector<double> x(m);
  for (double& v : x) v = rng.normal();
  const BnJacobianBlock b = build_block(x, 1.0, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(eig_sym(b.jacobian));
}
BENCHMARK(BM_EigSym)->Arg(32)->Arg(128);

static void BM_TrainStep(benchmark::State& state) {
  TrainConfig c;
  c.network.n = 1;
  c.network.channels = {8, 16, 32};
  c.data.synthetic_per_class = 8;
  c.data.synthetic_test_per_class = 1;
  c.batch_size = 32;
  c.eval_interval = 0;
  c.diag_interval = 1000000;
  c.reg.kind = RegKind::Orthonormal;
  const TrainData data = prepare_data(c);
  TrainOptions opt;
  opt.write_files = false;
  c.iterations = 5;
  for (auto _ : state) benchmark::DoNotOptimize(train(c, data, opt));
  state.SetItemsProcessed(state.iterations() * 5);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
