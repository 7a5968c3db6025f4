#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cxr/autograd.hpp"
#include "cxr/ops.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

enum class Task { Binary, Multilabel };

Task parse_task(const std::string& name);
std::string task_name(Task task);

enum class ResBlockKind { Basic, Bottleneck };

struct ConvBlockSpec {
  ConvSpec conv;
  bool pool = true;  // maxpool 2 after the activation
};

struct ModelConfig {
  Task task = Task::Binary;
  std::array<std::size_t, 3> input_shape = {1, 64, 64};  // C, H, W
  std::vector<ConvBlockSpec> conv_blocks;                // plain CNN path
  std::vector<std::size_t> dense_widths;
  std::size_t output_dim = 2;
  bool batchnorm = false;  // plain CNNs train without normalization

  bool residual = false;
  ResBlockKind block_kind = ResBlockKind::Basic;
  ConvSpec stem = {16, 3, 1, 1};
  bool stem_pool = false;
  std::vector<std::size_t> depth_per_stage;
  std::vector<std::size_t> stage_filters;
  std::vector<std::size_t> stage_strides;

  std::uint64_t seed = 0;
};

// Internal mode flags threaded through a forward pass. When `external`
// parameters are supplied the layers consume them in slot order instead of
// wrapping their own tensors.
struct ForwardState {
  bool training = false;
  bool with_grad = false;
  bool track_stats = true;
  const std::vector<Var>* external = nullptr;
  std::size_t cursor = 0;
  std::vector<Var>* sink = nullptr;

  Var param(Tensor& owned);
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Var forward(const Var& x, ForwardState& st) = 0;
  virtual void visit_params(const std::function<void(Tensor&)>&) {}
  virtual void visit_buffers(const std::function<void(Tensor&)>&) {}
  virtual std::string name() const = 0;
};

class Model {
 public:
  ModelConfig config;
  std::vector<std::unique_ptr<Layer>> layers;

  struct Graph {
    Var output;
    std::vector<Var> params;  // aligned with parameters()
  };

  // Builds the computation graph; training mode selects batch statistics
  // and (by default) accumulates running statistics.
  Graph forward(const Tensor& batch, bool training, bool track_stats = true);

  // Inference-mode probabilities with no tape.
  Tensor predict(const Tensor& batch);

  // Forward with externally supplied parameter variables in slot order;
  // running statistics are left untouched.
  Var forward_with(const std::vector<Var>& params, const Tensor& batch, bool training);

  std::vector<Tensor*> parameters();
  std::vector<Tensor*> buffers();
  std::size_t param_count();

 private:
  void check_batch(const Tensor& batch) const;
};

Model build_binary_cnn(const ModelConfig& config);
Model build_multilabel_cnn(const ModelConfig& config);
Model build_resnet(const ModelConfig& config);
Model build_model(const ModelConfig& config);  // dispatches on task/residual

// Named presets. `input_shape` is (C, H, W).
ModelConfig binary_baseline_config(std::array<std::size_t, 3> input_shape);
ModelConfig binary_optimized_config(std::array<std::size_t, 3> input_shape);
ModelConfig multilabel_cnn_config(std::array<std::size_t, 3> input_shape);
ModelConfig resnet_tiny_config(Task task, std::array<std::size_t, 3> input_shape);
ModelConfig resnet50_config(Task task, std::array<std::size_t, 3> input_shape);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace cxr
