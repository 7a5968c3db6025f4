#include <benchmark/benchmark.h>

#include "cxr/models.hpp"
#include "cxr/rng.hpp"
#include "cxr/trainer.hpp"

namespace {

cxr::DataSet toy_dataset(std::size_t n, std::size_t side) {
  cxr::RandomStream rng(13);
  cxr::DataSet data;
  for (std::size_t i = 0; i < n; ++i) {
    cxr::Tensor img({1, side, side});
    for (std::size_t j = 0; j < img.size(); ++j) img[j] = rng.uniform();
    data.images.push_back(std::move(img));
    cxr::LabelVector l;
    if (i % 2) l.bits[1] = 1;
    data.labels.push_back(l);
  }
  return data;
}

void bench_train_epoch_baseline(benchmark::State& state) {
  cxr::DataSet data = toy_dataset(32, 16);
  cxr::Model model = cxr::build_binary_cnn(cxr::binary_baseline_config({1, 16, 16}));
  cxr::AdamState st = cxr::AdamState::init_like(model);
  cxr::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  for (auto _ : state) {
    cxr::TrainHistory h = cxr::train(model, data, data, cfg, &st);
    benchmark::DoNotOptimize(h.epochs.data());
  }
}
BENCHMARK(bench_train_epoch_baseline)->Unit(benchmark::kMillisecond);

void bench_adam_step(benchmark::State& state) {
  cxr::Model model = cxr::build_binary_cnn(cxr::binary_baseline_config({1, 32, 32}));
  cxr::AdamState st = cxr::AdamState::init_like(model);
  cxr::TrainConfig cfg;
  std::vector<cxr::Tensor> grads;
  for (cxr::Tensor* p : model.parameters()) grads.push_back(cxr::Tensor::zeros(p->shape()));
  for (auto _ : state) {
    cxr::adam_step(model.parameters(), grads, st, cfg);
  }
}
BENCHMARK(bench_adam_step)->Unit(benchmark::kMillisecond);

}  // namespace
