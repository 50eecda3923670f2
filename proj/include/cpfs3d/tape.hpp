#pragma once

#include "cpfs3d/core.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace cpfs3d {

// Reverse-mode tape over dense Eigen matrices. One tape per training step;
// nodes are appended in forward order and visited in reverse on backward().
// Gradients are allocated lazily and only flow toward nodes flagged
// needs_grad, so constant inputs (positions, bank rows) receive none: a
// stop-gradient is simply a leaf with needs_grad == false.
template <typename S>
class Tape {
 public:
  using Mat = MatX<S>;

  struct Node {
    Mat value;
    Mat grad;  // empty until first accumulation
    bool needs_grad = false;
    std::function<void(Tape&)> backward;
  };

  int add(Mat value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void set_backward(int id, std::function<void(Tape&)> fn) {
    nodes_[static_cast<size_t>(id)].backward = std::move(fn);
  }

  const Mat& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
  bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad.size() > 0; }

  // Only valid while grad is non-empty (inside backward, or after it ran).
  const Mat& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

  Mat grad_or_zero(int id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() > 0) return n.grad;
    return Mat::Zero(n.value.rows(), n.value.cols());
  }

  void accumulate(int id, const Mat& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  // Seeds d(root)/d(root) = 1 (unless a seed was pre-accumulated) and
  // propagates in reverse creation order.
  void backward(int root) {
    Node& r = nodes_[static_cast<size_t>(root)];
    if (r.grad.size() == 0) r.grad = Mat::Ones(r.value.rows(), r.value.cols());
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.backward && n.grad.size() > 0) n.backward(*this);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// Lightweight handle; the free functions in ops.hpp build the graph.
template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const MatX<S>& value() const { return tape->value(id); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

template <typename S>
Var<S> leaf(Tape<S>& tape, MatX<S> value, bool needs_grad = false) {
  return {&tape, tape.add(std::move(value), needs_grad)};
}

template <typename S>
Var<S> scalar_leaf(Tape<S>& tape, S value) {
  MatX<S> m(1, 1);
  m(0, 0) = value;
  return leaf(tape, std::move(m), false);
}

}  // namespace cpfs3d
