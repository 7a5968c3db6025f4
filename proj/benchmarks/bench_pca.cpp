#include <benchmark/benchmark.h>

#include "cxr/pca.hpp"
#include "cxr/rng.hpp"

namespace {

cxr::Tensor random_channel(std::size_t side, std::uint64_t seed) {
  cxr::RandomStream rng(seed);
  cxr::Tensor t({side, side});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

void bench_fit_channel_pca(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  cxr::Tensor ch = random_channel(side, 11);
  for (auto _ : state) {
    cxr::ChannelPca pca = cxr::fit_channel_pca(ch);
    benchmark::DoNotOptimize(pca.singular_values.data());
  }
}
BENCHMARK(bench_fit_channel_pca)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void bench_compress_reconstruct(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  cxr::RandomStream rng(12);
  cxr::Tensor img({1, side, side});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  for (auto _ : state) {
    cxr::Tensor back = cxr::reconstruct(cxr::compress(img, side / 4));
    benchmark::DoNotOptimize(back.data());
  }
}
BENCHMARK(bench_compress_reconstruct)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
