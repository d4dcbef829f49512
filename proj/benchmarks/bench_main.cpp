#include <benchmark/benchmark.h>

#include <random>

#include "blindspot/autodiff.hpp"
#include "blindspot/dbsn.hpp"
#include "blindspot/guided_filter.hpp"
#include "blindspot/loss.hpp"
#include "blindspot/noise_model.hpp"
#include "blindspot/pixel_shuffle.hpp"

namespace {

using namespace blindspot;

Tensor uniform(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  const Tensor x = uniform({ch, 64, 64}, 1), w = uniform({ch, ch, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, 2));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ch * ch * 9 * 64 * 64));
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32);

void BM_DbsnForward(benchmark::State& state) {
  const DbsnConfig cfg = state.range(0) ? DbsnConfig{} : DbsnConfig::desk();
  const DbsnParams net = make_dbsn(cfg, 3);
  const Tensor y = uniform({1, 32, 32}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(dbsn_forward(net, y));
}
BENCHMARK(BM_DbsnForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_DbsnTrainStep(benchmark::State& state) {
  DbsnParams net = make_dbsn(DbsnConfig::desk(), 5);
  CnnEstParams est = make_cnn_est(1, 6, 0.1);
  const Tensor y = uniform({1, 32, 32}, 7);
  const ValidMask mask = ValidMask::interior(32, 32, 8);
  for (auto _ : state) {
    Tape tape;
    const ParamBinder bind = constant_binder(tape);
    const Var in = tape.variable(y);
    const DbsnVars out = dbsn_forward(tape, net, in, bind);
    const Var sn = cnn_est_forward(tape, est, in, bind);
    const Var loss = constrained_nll(y, out.mu, sn, out.sigma_mu, mask);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(in));
  }
}
BENCHMARK(BM_DbsnTrainStep)->Unit(benchmark::kMillisecond);

void BM_PixelShuffleRoundTrip(benchmark::State& state) {
  const Tensor y = uniform({3, 256, 256}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(ps_up(ps_down(y)));
}
BENCHMARK(BM_PixelShuffleRoundTrip);

void BM_GuidedFilter(benchmark::State& state) {
  const Tensor y = uniform({3, 256, 256}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(guided_filter(y, y));
}
BENCHMARK(BM_GuidedFilter);

}  // namespace

BENCHMARK_MAIN();
