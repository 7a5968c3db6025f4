#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

struct GradNode;
using GradNodePtr = std::shared_ptr<GradNode>;

// One vertex of the reverse-mode tape. `backprop` reads this node's gradient
// and accumulates contributions into the parents' gradients.
struct GradNode {
  Tensor value;
  Tensor grad;  // empty until backward() reaches this node
  bool requires_grad = false;
  std::vector<GradNodePtr> parents;
  std::function<void(GradNode&)> backprop;

  void accumulate(const Tensor& g);
};

// Value-semantics handle to a graph node. Cheap to copy; the graph itself is
// shared and immutable once built.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const;
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }
  const GradNodePtr& node() const { return node_; }

  // Internal: builds an op node. Parents that do not require gradients are
  // pruned so inference passes carry no tape.
  static Var make_op(Tensor value, std::vector<Var> parents,
                     std::function<void(GradNode&)> backprop);

 private:
  GradNodePtr node_;
};

// Reverse-mode sweep from a scalar loss. Every requires-grad node reachable
// from `loss` ends up with a gradient tensor shaped like its value; gradients
// accumulate additively across fan-out. Rejects non-scalar losses.
void backward(const Var& loss);

}  // namespace cxr
