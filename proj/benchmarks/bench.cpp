#include <benchmark/benchmark.h>

#include "ewmlab/ops.hpp"
#include "ewmlab/trainer.hpp"

using namespace ewmlab;

namespace {

RunConfig bench_config() {
  RunConfig c;
  c.world.train_size = 64;
  c.world.val_size = 1;
  c.world.test_size = 16;
  c.finalize();
  return c;
}

Tensor filled(std::size_t r, std::size_t c) {
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.001 * static_cast<double>(i % 97);
  return Tensor({r, c}, std::move(v));
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n, n), b = filled(n, n);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128);

static void BM_ThinkerForward(benchmark::State& state) {
  const auto cfg = bench_config();
  const auto model = build_model(cfg);
  const auto ep = make_dataset(cfg.world).test[0];
  const auto seq = model->sequence_for(ep, {true, true}, ep.label);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(model->thinker().forward(seq).h);
}
BENCHMARK(BM_ThinkerForward);

static void BM_Predict(benchmark::State& state) {
  const auto cfg = bench_config();
  const auto model = build_model(cfg);
  const auto ep = make_dataset(cfg.world).test[0];
  for (auto _ : state) benchmark::DoNotOptimize(model->predict(ep, {}));
}
BENCHMARK(BM_Predict);

static void BM_TrainStep(benchmark::State& state) {
  const auto cfg = bench_config();
  auto model = build_model(cfg);
  const auto ds = make_dataset(cfg.world);
  const std::vector<Episode> batch(ds.train.begin(), ds.train.begin() + static_cast<long>(cfg.train.batch_size));
  AdamW opt(model->store(), {}, LrSchedule{1e-3, 0.0, 1000000});
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(*model, opt, batch, rng));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
