#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/losses.hpp"
#include "cxr/metrics.hpp"
#include "cxr/models.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

enum class LossKind { Eq1Softmax, WeightedBce };

LossKind parse_loss_kind(const std::string& name);
std::string loss_kind_name(LossKind kind);
LossKind default_loss_kind(Task task);

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
  std::size_t batch_size = 8;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::Eq1Softmax;
  bool use_class_weights = false;
  double threshold = 0.5;

  void validate() const;
};

// Adam bookkeeping plus the completed-epoch counter that keeps per-epoch
// shuffles identical across save/resume boundaries.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
  std::uint64_t epochs_completed = 0;

  static AdamState init_like(Model& model);
};

// Standard Adam with bias correction; one call advances the step counter by
// one. Rejects shape mismatches between params, grads and moments.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const TrainConfig& config);

// In-memory dataset: decoded images plus their label vectors.
struct DataSet {
  std::vector<Tensor> images;  // each (C, H, W)
  std::vector<LabelVector> labels;

  std::size_t size() const { return images.size(); }
  std::array<std::size_t, 3> image_shape() const;
  Tensor batch_images(const std::vector<std::size_t>& idx) const;
  // Loss targets: binary -> one-hot over {No Finding, Disease Present};
  // multilabel -> 14-wide multi-hot.
  Tensor loss_targets(const std::vector<std::size_t>& idx, Task task) const;
  // Metric labels: binary -> (N, 1) disease-present column; multilabel ->
  // (N, 14).
  Tensor metric_labels(Task task) const;
};

// Reads `<image_dir>/<image_id>.npy` for every record.
DataSet load_dataset(const DatasetManifest& manifest, const std::string& image_dir);

// Inverse-frequency weights over the task's class space, computed from this
// (train) split only.
ClassWeights training_class_weights(const DataSet& data, Task task);

std::vector<std::string> task_class_names(Task task);

struct TrainHistory {
  struct Epoch {
    std::size_t epoch = 0;  // 1-based, cumulative across resumes
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    std::optional<double> val_mean_auc;
    double wall_seconds = 0.0;  // informational; not part of the CSV
  };
  std::vector<Epoch> epochs;
};

// Deterministic training loop: seeded shuffle per epoch, mini-batches with
// the last partial batch kept, per-epoch validation. `state` may carry over
// from a loaded checkpoint; when null a fresh state is used internally.
TrainHistory train(Model& model, const DataSet& train_data, const DataSet& val_data,
                   const TrainConfig& config, AdamState* state = nullptr);

// Inference-mode probabilities for the whole dataset, (N, output_dim).
Tensor predict_probs(Model& model, const DataSet& data, std::size_t batch_size);

MetricsReport evaluate(Model& model, const DataSet& data, const TrainConfig& config);

// Deterministic history serialization (wall time excluded).
std::string history_csv(const TrainHistory& history);

}  // namespace cxr
