// Reverse-mode autodiff over Tensor values. A Tape records each operation as
// it executes (creation order is a topological order), and backward() replays
// the recorded closures in reverse, accumulating gradients. Parameter leaves
// are bound to a ParamStore; their gradients are flushed into the store at the
// end of backward(), so the optimizer never touches the tape.
//
// Tapes are single-use: build a forward pass, call backward() at most once,
// then discard. Ops skip recording closures when no ancestor requires
// gradients, which makes eval-mode forwards cheap.
#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "scgseg/params.hpp"
#include "scgseg/tensor.hpp"

namespace scgseg {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  // Leaf with no gradient (inputs, targets, fixed noise).
  Var constant(Tensor<Scalar> v) {
    return push(std::move(v), /*needs_grad=*/false, nullptr);
  }

  // Differentiable leaf that is not a stored parameter (used by gradient
  // checks that differentiate with respect to activations).
  Var input(Tensor<Scalar> v) {
    return push(std::move(v), /*needs_grad=*/true, nullptr);
  }

  // Differentiable leaf bound to a parameter store entry.
  Var param(ParamStore<Scalar>& store, int param_id) {
    Var v = push(store.value(param_id), /*needs_grad=*/true, nullptr);
    nodes_[v.id].store = &store;
    nodes_[v.id].param_id = param_id;
    return v;
  }

  Var param(ParamStore<Scalar>& store, const std::string& name) {
    return param(store, store.id(name));
  }

  // Record an op result. `bw` may be empty when needs_grad is false.
  Var push(Tensor<Scalar> value, bool needs_grad, BackwardFn bw) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  // Ops attach their closure after push so the closure can capture the
  // output Var by value.
  void set_backward(Var v, BackwardFn bw) {
    nodes_[v.id].backward = std::move(bw);
  }

  const Tensor<Scalar>& val(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Gradient of a node; allocated (zero) on first access.
  Tensor<Scalar>& grad(Var v) {
    Node& n = nodes_[v.id];
    if (!n.grad_alloc) {
      n.grad = Tensor<Scalar>::zeros(n.value.shape);
      n.grad_alloc = true;
    }
    return n.grad;
  }
  bool has_grad(Var v) const { return nodes_[v.id].grad_alloc; }

  // Accumulate into a node's gradient unless gradients are not tracked there.
  void accum(Var v, const typename Tensor<Scalar>::Storage& g) {
    if (!nodes_[v.id].needs_grad) return;
    grad(v).data += g;
  }
  void accum(Var v, const Tensor<Scalar>& g) { accum(v, g.data); }

  // Backpropagate from a scalar root. Parameter gradients are added into
  // their stores, so repeated training steps accumulate naturally after
  // zero_grad().
  void backward(Var root) {
    if (nodes_[root.id].value.size() != 1)
      throw ValidationError("backward() expects a scalar root, got shape " +
                            shape_str(nodes_[root.id].value.shape));
    grad(root).data.setConstant(Scalar(1));
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || !n.grad_alloc) continue;
      if (n.backward) n.backward(*this);
      if (n.store != nullptr)
        n.store->grad(n.param_id).data += n.grad.data;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    BackwardFn backward;
    ParamStore<Scalar>* store = nullptr;
    int param_id = -1;
    bool needs_grad = false;
    bool grad_alloc = false;
  };

  std::vector<Node> nodes_;
};

}  // namespace scgseg
