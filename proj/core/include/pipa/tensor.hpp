#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace pipa {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

/// One node of the computation graph. The graph is the DAG formed by the
/// `parents` links; a backward pass visits the reachable subgraph in reverse
/// topological order exactly once.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backprop;

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

/// Dense multi-dimensional array of doubles with an optional gradient buffer
/// and reverse-mode graph linkage. Copying a Tensor copies the handle, not
/// the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  std::int64_t numel() const { return node_->numel(); }

  double* data() { return node_->value.data(); }
  const double* data() const { return node_->value.data(); }
  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  /// Value of a rank-0/1-element tensor.
  double item() const;
  double at(std::initializer_list<int> idx) const;

  Tensor& set_requires_grad(bool b);
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }
  const std::vector<double>& grad() const;
  std::vector<double>& grad();
  void zero_grad();

  /// Reverse-mode sweep from a scalar root. Leaf gradients accumulate across
  /// calls; interior gradients are fresh per call.
  void backward() const;

  /// Value copy with no graph linkage and no gradient requirement.
  Tensor detach() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Builds a non-leaf node; wires parents and the backward rule only when some
/// input participates in differentiation.
Tensor make_op_node(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                    std::function<void(Node&)> backprop);

}  // namespace detail

}  // namespace pipa
