#include <benchmark/benchmark.h>

#include "cfn/preprocess.hpp"
#include "cfn/rng.hpp"

namespace {

cfn::TagMatrix random_tags(std::size_t rows, std::size_t cols, double density) {
  cfn::Rng rng(5);
  std::vector<std::string> names(cols);
  for (std::size_t c = 0; c < cols; ++c) names[c] = std::to_string(c);
  std::vector<cfn::TagEntry> entries;
  for (cfn::Index r = 0; r < rows; ++r)
    for (cfn::Index c = 0; c < cols; ++c)
      if (rng.uniform() < density) entries.push_back({r, c, 1.0 + static_cast<double>(rng.below(3))});
  return cfn::TagMatrix(rows, std::move(names), std::move(entries));
}

void BM_SvdEmbed(benchmark::State& state) {
  const auto tags = random_tags(static_cast<std::size_t>(state.range(0)), 2000, 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(cfn::svd_embed(tags, 50));
}
BENCHMARK(BM_SvdEmbed)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

}  // namespace
