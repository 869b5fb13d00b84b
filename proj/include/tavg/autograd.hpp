#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tavg/tensor.hpp"

namespace tavg::ag {

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
};

/// Shared handle to a node of the reverse-mode tape.
///
/// Copies alias the same node. Leaves created with requires_grad = true are
/// model parameters; their gradients accumulate across backward() calls until
/// zero_grad().
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const std::vector<int>& shape() const { return node_->value.shape(); }
  int dim(int axis) const { return node_->value.dim(axis); }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  /// Gradient accumulated so far; zeros if nothing was accumulated.
  Tensor grad() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Creates a result node. If no input requires a gradient the backward
/// closure is dropped and the result is a constant.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

/// Back-propagates from a scalar (single-element) root.
void backward(const Var& root);

/// Same value, cut from the tape.
Var detach(const Var& v);

Var constant(Tensor value);

}  // namespace tavg::ag
