#include "iw/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "iw/errors.hpp"

namespace iw::ad {

namespace {
thread_local std::uint64_t g_seq_counter = 0;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

void Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_data(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  std::vector<double> data(static_cast<size_t>(shape_size(shape)), v);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  auto n = std::make_shared<Node>();
  const auto count = static_cast<size_t>(shape_size(shape));
  if (data.empty()) data.assign(count, 0.0);
  if (data.size() != count)
    throw ShapeMismatch("from_data: " + std::to_string(data.size()) +
                        " values for shape " + shape_str(shape));
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  n->seq = ++g_seq_counter;
  return Tensor(std::move(n));
}

Tensor Tensor::param(Shape shape, std::vector<double> data) {
  return from_data(std::move(shape), std::move(data), true);
}

std::span<const double> Tensor::grad() const& {
  n_->ensure_grad();
  return n_->grad;
}

void Tensor::zero_grad() {
  n_->grad.assign(n_->value.size(), 0.0);
  n_->backward_visits = 0;
}

double Tensor::item() const {
  if (n_->value.size() != 1)
    throw ShapeMismatch("item: tensor of shape " + shape_str(n_->shape) +
                        " is not a scalar");
  return n_->value[0];
}

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> inputs, std::function<void(Node&)> backprop) {
  bool needs_grad = false;
  for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();

  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = needs_grad;
  n->seq = ++g_seq_counter;
  if (needs_grad) {
    n->parents.reserve(inputs.size());
    for (auto& t : inputs) n->parents.push_back(t.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

BackwardStats backward(const Tensor& root) {
  if (!root.defined() || !root.requires_grad())
    throw InvalidConfig("backward: root does not require gradients");
  if (root.node()->value.size() != 1)
    throw ShapeMismatch("backward: root must be scalar, got shape " +
                        shape_str(root.shape()));

  // Collect the reachable differentiable subgraph.
  std::vector<Node*> nodes;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node().get()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second)
        stack.push_back(p.get());
    }
  }

  // Reverse creation order is a reverse topological order of the tape.
  std::sort(nodes.begin(), nodes.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });

  root.node()->ensure_grad();
  root.node()->grad[0] += 1.0;

  BackwardStats stats;
  for (Node* n : nodes) {
    ++n->backward_visits;
    ++stats.nodes_visited;
    if (n->backprop) {
      n->ensure_grad();
      for (const auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backprop(*n);
    }
  }
  return stats;
}

}  // namespace iw::ad
