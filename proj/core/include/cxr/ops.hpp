#pragma once

#include <cstddef>
#include <string>

#include "cxr/autograd.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

struct ConvSpec {
  std::size_t filter_count = 1;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// floor((in + 2*padding - kernel) / stride) + 1; throws if the result would
// not be a positive extent.
std::size_t conv_output_extent(std::size_t in, const ConvSpec& spec);

// Cross-correlation (no kernel flip) with per-filter bias.
// input [B,C,H,W], kernels [F,C,K,K], bias [F] -> [B,F,H',W'].
Var conv2d(const Var& input, const Var& kernels, const Var& bias, const ConvSpec& spec);

// Non-overlapping window max; H and W must be divisible by `window`.
// Gradient routes to the first maximal element in row-major order.
Var maxpool2d(const Var& input, std::size_t window);

// input [B,D] * weight [D,M] + bias [M] -> [B,M].
Var affine(const Var& input, const Var& weight, const Var& bias);

enum class ActivationKind { Relu, Sigmoid, Softmax };

ActivationKind parse_activation_kind(const std::string& name);
std::string activation_kind_name(ActivationKind kind);

Var relu(const Var& input);
Var sigmoid(const Var& input);   // branch-by-sign stable form
Var softmax(const Var& input);   // over the last axis
Var activation(ActivationKind kind, const Var& input);
Var activation(const std::string& kind, const Var& input);

// Running statistics for batchnorm inference mode.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;

  explicit BatchNormState(std::size_t channels = 1)
      : running_mean(Tensor::zeros({channels})), running_var(Tensor::full({channels}, 1.0)) {}
};

// Per-channel standardization over batch and spatial axes (training mode) or
// over `state`'s running statistics (inference). Training mode updates the
// running statistics in place when `state` is given.
Var batchnorm2d(const Var& input, const Var& gamma, const Var& beta, double eps, bool training,
                BatchNormState* state = nullptr);

Var add(const Var& a, const Var& b);
Var reshape(const Var& input, std::vector<std::size_t> shape);
Var flatten(const Var& input);          // [B,...] -> [B, rest]
Var global_avg_pool(const Var& input);  // [B,C,H,W] -> [B,C]

}  // namespace cxr
