#include "pipa/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

#include "pipa/exec.hpp"

namespace pipa {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extent must be positive, got " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->value.assign(static_cast<size_t>(shape_numel(shape)), v);
  n->shape = std::move(shape);
  return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() requires a single-element tensor, shape is " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const Shape& s = node_->shape;
  if (idx.size() != s.size()) throw std::invalid_argument("index rank mismatch");
  std::int64_t flat = 0;
  size_t k = 0;
  for (int i : idx) {
    if (i < 0 || i >= s[k]) throw std::out_of_range("tensor index out of range");
    flat = flat * s[k] + i;
    ++k;
  }
  return node_->value[static_cast<size_t>(flat)];
}

Tensor& Tensor::set_requires_grad(bool b) {
  if (!node_->leaf) throw std::logic_error("requires_grad can only be toggled on leaf tensors");
  node_->requires_grad = b;
  return *this;
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient buffer");
  return node_->grad;
}

std::vector<double>& Tensor::grad() {
  if (!has_grad()) throw std::logic_error("tensor has no gradient buffer");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->grad.size() == node_->value.size()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

void Tensor::backward() const {
  if (!node_) throw std::logic_error("backward on undefined tensor");
  if (numel() != 1) throw std::invalid_argument("backward must start from a scalar, shape is " + shape_str(shape()));
  if (!node_->requires_grad) return;  // nothing reachable needs a gradient

  // Topological order over the requires-grad subgraph: parents precede users.
  std::vector<detail::Node*> topo;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* n;
    size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get()});
  seen.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      detail::Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p});
      }
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }

  // Interior gradients are per-pass scratch; leaf gradients accumulate.
  for (detail::Node* n : topo) {
    if (n->leaf) {
      n->ensure_grad();
    } else {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  node_->grad[0] += 1.0;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  return Tensor(std::move(n));
}

namespace detail {

Tensor make_op_node(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                    std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  if (shape_numel(shape) != static_cast<std::int64_t>(value.size())) {
    throw std::logic_error("op produced value count inconsistent with its shape");
  }
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->leaf = false;
  bool any = false;
  if (!exec_context().no_grad) {
    for (const Tensor& t : inputs) {
      if (t.defined() && t.requires_grad()) {
        any = true;
        break;
      }
    }
  }
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) {
      if (t.defined()) n->parents.push_back(t.node());
    }
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

}  // namespace detail

}  // namespace pipa
