#pragma once

#include <string>
#include <vector>

#include "cxr/autograd.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

// Inverse-frequency class weights w_i = N / n_i.
struct ClassWeights {
  std::vector<double> values;

  static ClassWeights ones(std::size_t n) { return ClassWeights{std::vector<double>(n, 1.0)}; }
  std::size_t size() const { return values.size(); }
};

// w_i = N / n_i exactly. Rejects N <= 0 and any n_i = 0, naming the class
// (by `names` when given, by index otherwise).
ClassWeights compute_class_weights(const std::vector<std::size_t>& counts, std::size_t total,
                                   const std::vector<std::string>& names = {});

// Probabilities are clamped to [1e-12, 1 - 1e-12] before any log; the
// gradient flows through the clamp (zero outside it).
inline constexpr double kProbClamp = 1e-12;

// L = -sum_i w_i * y_i * log(p_i), averaged over the batch (rows of a
// rank-2 input; a rank-1 input is one sample). Penalizes positive labels
// only; intended for softmax heads.
Var weighted_cross_entropy(const Var& probs, const Tensor& targets, const ClassWeights& weights);

// L = -sum_i [ w_i * y_i * log(p_i) + (1 - y_i) * log(1 - p_i) ], batch
// mean; the negative term has unit weight. Intended for sigmoid heads.
Var weighted_bce_multilabel(const Var& probs, const Tensor& targets, const ClassWeights& weights);

// Two-column CSV (label, weight).
std::string class_weights_csv(const ClassWeights& weights, const std::vector<std::string>& names);

}  // namespace cxr
