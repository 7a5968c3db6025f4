#include <benchmark/benchmark.h>

#include "cxr/autograd.hpp"
#include "cxr/ops.hpp"
#include "cxr/rng.hpp"
#include "cxr/tensor.hpp"

namespace {

cxr::Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  cxr::RandomStream rng(seed);
  cxr::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

void bench_conv2d_forward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  cxr::Tensor in = random_tensor({8, 16, side, side}, 1);
  cxr::Tensor k = random_tensor({16, 16, 3, 3}, 2);
  cxr::Tensor b = random_tensor({16}, 3);
  for (auto _ : state) {
    cxr::Var out = cxr::conv2d(cxr::Var(in), cxr::Var(k), cxr::Var(b), {16, 3, 1, 1});
    benchmark::DoNotOptimize(out.value().data());
  }
}
BENCHMARK(bench_conv2d_forward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void bench_conv2d_backward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  cxr::Tensor in = random_tensor({8, 16, side, side}, 4);
  cxr::Tensor k = random_tensor({16, 16, 3, 3}, 5);
  cxr::Tensor b = random_tensor({16}, 6);
  for (auto _ : state) {
    cxr::Var vi(in, true), vk(k, true), vb(b, true);
    cxr::Var out = cxr::conv2d(vi, vk, vb, {16, 3, 1, 1});
    double s = 0.0;
    for (std::size_t i = 0; i < out.value().size(); ++i) s += out.value()[i];
    cxr::Var loss = cxr::Var::make_op(cxr::Tensor::scalar(s), {out}, [](cxr::GradNode& self) {
      self.parents[0]->accumulate(
          cxr::Tensor::full(self.parents[0]->value.shape(), self.grad[0]));
    });
    cxr::backward(loss);
    benchmark::DoNotOptimize(vk.grad().data());
  }
}
BENCHMARK(bench_conv2d_backward)->Arg(16)->Unit(benchmark::kMillisecond);

void bench_maxpool(benchmark::State& state) {
  cxr::Tensor in = random_tensor({8, 32, 32, 32}, 7);
  for (auto _ : state) {
    cxr::Var out = cxr::maxpool2d(cxr::Var(in), 2);
    benchmark::DoNotOptimize(out.value().data());
  }
}
BENCHMARK(bench_maxpool)->Unit(benchmark::kMillisecond);

void bench_affine(benchmark::State& state) {
  cxr::Tensor in = random_tensor({32, 2048}, 8);
  cxr::Tensor w = random_tensor({2048, 128}, 9);
  cxr::Tensor b = random_tensor({128}, 10);
  for (auto _ : state) {
    cxr::Var out = cxr::affine(cxr::Var(in), cxr::Var(w), cxr::Var(b));
    benchmark::DoNotOptimize(out.value().data());
  }
}
BENCHMARK(bench_affine)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
