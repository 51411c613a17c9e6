#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace iw::ad {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_size(const Shape& s);

/// One entry of the tape: the value produced by an operation, links to the
/// operations that produced its inputs, and the rule that distributes an
/// incoming gradient to those inputs.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first use
  bool requires_grad = false;
  std::uint64_t seq = 0;  // creation order within the recording thread
  int backward_visits = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad();
};

/// Value handle onto a tape node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  /// Leaf with requires_grad = true (a trainable parameter).
  static Tensor param(Shape shape, std::vector<double> data);

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(n_->value.size()); }
  bool requires_grad() const { return n_->requires_grad; }

  // Spans alias the node's storage; binding them off a temporary tensor
  // would dangle, so rvalue access is disabled.
  std::span<const double> value() const& { return n_->value; }
  std::span<const double> value() const&& = delete;
  std::span<double> mutable_value() & { return n_->value; }
  std::span<double> mutable_value() && = delete;
  std::span<const double> grad() const&;
  std::span<const double> grad() const&& = delete;
  void zero_grad();

  /// Value of a rank-0/size-1 tensor.
  double item() const;

  std::uint64_t seq() const { return n_->seq; }
  int backward_visits() const { return n_->backward_visits; }

  std::shared_ptr<Node>& node() { return n_; }
  const std::shared_ptr<Node>& node() const { return n_; }

  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

 private:
  std::shared_ptr<Node> n_;
};

struct BackwardStats {
  std::size_t nodes_visited = 0;
};

/// Reverse pass over the tape reachable from `root` (a scalar). Visits nodes
/// in reverse creation order, each exactly once, accumulating gradients into
/// every tensor on the path that requires them.
BackwardStats backward(const Tensor& root);

/// Creates a node; records parents/backprop only when some input requires
/// gradients. Building block for all operations.
Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> inputs, std::function<void(Node&)> backprop);

}  // namespace iw::ad
