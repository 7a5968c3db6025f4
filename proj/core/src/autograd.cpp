#include "cxr/autograd.hpp"

#include <unordered_set>

#include "cxr/error.hpp"

namespace cxr {

void GradNode::accumulate(const Tensor& g) {
  if (grad.empty()) grad = Tensor::zeros(value.shape());
  check_same_shape(grad, g, "gradient accumulation");
  double* dst = grad.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
}

Var::Var(Tensor value, bool requires_grad) {
  node_ = std::make_shared<GradNode>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::grad() const {
  if (!has_grad()) throw ValueError("variable has no gradient; run backward() first");
  return node_->grad;
}

Var Var::make_op(Tensor value, std::vector<Var> parents, std::function<void(GradNode&)> backprop) {
  Var out(std::move(value), false);
  bool needs = false;
  for (const Var& p : parents) {
    if (p.requires_grad()) {
      needs = true;
      break;
    }
  }
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (Var& p : parents) out.node_->parents.push_back(p.node());
    out.node_->backprop = std::move(backprop);
  }
  return out;
}

void backward(const Var& loss) {
  if (!loss.defined()) throw ValueError("backward: undefined variable");
  if (loss.value().size() != 1) {
    throw ValueError("backward requires a scalar loss, got shape " + loss.value().shape_string());
  }

  // Iterative post-order DFS; each node enters the order exactly once.
  std::vector<GradNode*> order;
  std::unordered_set<GradNode*> visited;
  std::vector<std::pair<GradNode*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      GradNode* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (GradNode* n : order) {
    if (n->requires_grad && n->grad.empty()) n->grad = Tensor::zeros(n->value.shape());
  }

  loss.node()->grad = Tensor::full(loss.value().shape(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    GradNode* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

}  // namespace cxr
