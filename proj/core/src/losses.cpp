#include "cxr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cxr/csv.hpp"
#include "cxr/error.hpp"

namespace cxr {

ClassWeights compute_class_weights(const std::vector<std::size_t>& counts, std::size_t total,
                                   const std::vector<std::string>& names) {
  if (total == 0) throw ValueError("compute_class_weights: total sample count must be positive");
  ClassWeights w;
  w.values.reserve(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) {
      const std::string who = i < names.size() ? "'" + names[i] + "'" : "index " + std::to_string(i);
      throw ValueError("compute_class_weights: cannot weight a class with zero samples (class " +
                       who + ")");
    }
    w.values.push_back(static_cast<double>(total) / static_cast<double>(counts[i]));
  }
  return w;
}

namespace {

struct LossShape {
  std::size_t batch;
  std::size_t classes;
};

LossShape check_loss_args(const Tensor& probs, const Tensor& targets, const ClassWeights& w,
                          const char* what) {
  if (probs.rank() != 1 && probs.rank() != 2) {
    throw ShapeError(std::string(what) + ": probabilities must be rank 1 or 2, got " +
                     probs.shape_string());
  }
  check_same_shape(probs, targets, what);
  const std::size_t classes = probs.extent(probs.rank() - 1);
  if (classes != w.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(w.size()) + " class weights vs " +
                     std::to_string(classes) + " classes");
  }
  const std::size_t batch = probs.rank() == 2 ? probs.extent(0) : 1;
  return {batch, classes};
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

}  // namespace

Var weighted_cross_entropy(const Var& probs, const Tensor& targets, const ClassWeights& weights) {
  const auto [batch, classes] = check_loss_args(probs.value(), targets, weights,
                                                "weighted_cross_entropy");
  const Tensor& p = probs.value();
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t i = b * classes + c;
      if (targets[i] != 0.0) loss -= weights.values[c] * targets[i] * std::log(clamp_prob(p[i]));
    }
  }
  loss /= static_cast<double>(batch);

  auto rule = [targets, weights, batch, classes](GradNode& self) {
    GradNode& p_node = *self.parents[0];
    if (!p_node.requires_grad) return;
    const Tensor& p = p_node.value;
    const double scale = self.grad[0] / static_cast<double>(batch);
    Tensor dp = Tensor::zeros(p.shape());
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t i = b * classes + c;
        if (targets[i] == 0.0) continue;
        if (p[i] < kProbClamp || p[i] > 1.0 - kProbClamp) continue;  // clamped: flat
        dp[i] = -scale * weights.values[c] * targets[i] / p[i];
      }
    }
    p_node.accumulate(dp);
  };
  return Var::make_op(Tensor::scalar(loss), {probs}, rule);
}

Var weighted_bce_multilabel(const Var& probs, const Tensor& targets, const ClassWeights& weights) {
  const auto [batch, classes] = check_loss_args(probs.value(), targets, weights,
                                                "weighted_bce_multilabel");
  const Tensor& p = probs.value();
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t i = b * classes + c;
      const double q = clamp_prob(p[i]);
      loss -= weights.values[c] * targets[i] * std::log(q) +
              (1.0 - targets[i]) * std::log(1.0 - q);
    }
  }
  loss /= static_cast<double>(batch);

  auto rule = [targets, weights, batch, classes](GradNode& self) {
    GradNode& p_node = *self.parents[0];
    if (!p_node.requires_grad) return;
    const Tensor& p = p_node.value;
    const double scale = self.grad[0] / static_cast<double>(batch);
    Tensor dp = Tensor::zeros(p.shape());
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t i = b * classes + c;
        if (p[i] < kProbClamp || p[i] > 1.0 - kProbClamp) continue;
        dp[i] = scale * (-weights.values[c] * targets[i] / p[i] +
                         (1.0 - targets[i]) / (1.0 - p[i]));
      }
    }
    p_node.accumulate(dp);
  };
  return Var::make_op(Tensor::scalar(loss), {probs}, rule);
}

std::string class_weights_csv(const ClassWeights& weights, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "label,weight\n";
  os.precision(17);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const std::string name = i < names.size() ? names[i] : "class_" + std::to_string(i);
    os << csv_escape(name) << "," << weights.values[i] << "\n";
  }
  return os.str();
}

}  // namespace cxr
