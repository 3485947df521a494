#include <benchmark/benchmark.h>

#include "cfn/model.hpp"

namespace {

cfn::SparseVector random_vector(std::size_t n, double density, cfn::Rng& rng) {
  cfn::SparseVector x{n, {}};
  for (cfn::Index j = 0; j < n; ++j)
    if (rng.uniform() < density) x.known.push_back({j, rng.uniform(-1.0, 1.0)});
  return x;
}

// Item vector shaped like MovieLens-1M: 6040 users, ~4% observed.
void BM_Forward(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const auto params = cfn::init_params(6040, hidden, 0, 0, 1);
  cfn::Rng rng(2);
  const auto x = random_vector(6040, 0.045, rng);
  for (auto _ : state) benchmark::DoNotOptimize(cfn::forward(params, x));
}
BENCHMARK(BM_Forward)->Arg(100)->Arg(600);

void BM_AccumulateSample(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const auto params = cfn::init_params(6040, hidden, 0, 0, 1);
  cfn::Rng rng(3);
  const auto x = random_vector(6040, 0.045, rng);
  const auto c = cfn::corrupt(x, 0.25, rng);
  cfn::GradientAccumulator acc(params);
  const cfn::LossWeights w{1.0, 0.5, 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(acc.add_sample(params, x, c.input, c.mask, w));
}
BENCHMARK(BM_AccumulateSample)->Arg(100)->Arg(600);

void BM_MinibatchStep(benchmark::State& state) {
  auto params = cfn::init_params(6040, 600, 0, 0, 1);
  cfn::Rng rng(4);
  std::vector<cfn::Corrupted> batch;
  std::vector<cfn::SparseVector> clean;
  for (int b = 0; b < 32; ++b) {
    clean.push_back(random_vector(6040, 0.045, rng));
    batch.push_back(cfn::corrupt(clean.back(), 0.25, rng));
  }
  cfn::GradientAccumulator acc(params);
  const cfn::LossWeights w{1.0, 0.5, 1e-4};
  for (auto _ : state) {
    for (std::size_t b = 0; b < batch.size(); ++b) acc.add_sample(params, clean[b], batch[b].input, batch[b].mask, w);
    acc.apply(params, 1e-6, w.lambda, batch.size());
  }
}
BENCHMARK(BM_MinibatchStep)->Unit(benchmark::kMillisecond);

}  // namespace
