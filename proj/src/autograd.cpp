#include "tavg/autograd.hpp"

#include <unordered_set>

#include "tavg/errors.hpp"

namespace tavg::ag {

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor::zeros_like(value);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (!node_) return {};
  if (node_->grad.empty()) return Tensor::zeros_like(node_->value);
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor{};
}

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  Var out(std::move(value));
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.inputs.reserve(inputs.size());
    for (auto& in : inputs) node.inputs.push_back(in.node());
    node.backward_fn = std::move(backward_fn);
  }
  return out;
}

void backward(const Var& root) {
  if (!root.defined()) throw ConfigError("backward on undefined variable");
  if (root.value().size() != 1) {
    throw ConfigError("backward root must be a scalar, got " + shape_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  // Intermediate gradients are not needed after the sweep.
  for (Node* node : order) {
    if (node->backward_fn) node->grad = Tensor{};
  }
}

Var detach(const Var& v) { return Var(v.value()); }

Var constant(Tensor value) { return Var(std::move(value)); }

}  // namespace tavg::ag
