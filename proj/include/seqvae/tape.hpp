#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqvae/tensor.hpp"

namespace seqvae {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  bool valid() const noexcept { return tape != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }
};

/// Dynamic reverse-mode tape. Rebuilt for every forward pass; nodes are
/// appended in evaluation order, so that order is already topological.
class Tape {
public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push("constant", std::move(value), false, nullptr, {}); }

  /// Leaf bound to a Parameter. Registering the same Parameter twice
  /// returns the same node.
  Var param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
    Var v = push("parameter", p.value, true, &p, {});
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  /// Read-only leaf holding a copy of a Parameter's value; no gradient.
  Var frozen(const Parameter& p) {
    if (auto it = frozen_nodes_.find(&p); it != frozen_nodes_.end()) return Var{this, it->second};
    Var v = constant(p.value);
    frozen_nodes_.emplace(&p, v.id);
    return v;
  }

  /// Appends a derived node. `inputs` decides whether it needs a gradient.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(op, std::move(value), std::vector<Var>(inputs), std::move(backward));
  }

  Var record(const char* op, Tensor value, const std::vector<Var>& inputs, Backward backward) {
    bool needs = false;
    for (const Var& in : inputs) {
      check_owned(in, op);
      needs = needs || nodes_[in.id].requires_grad;
    }
    return push(op, std::move(value), needs, nullptr, needs ? std::move(backward) : Backward{});
  }

  const Tensor& value(Var v) const {
    check_owned(v, "value");
    return nodes_[v.id].value;
  }

  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient buffer of a node, allocated as zeros on first touch.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }
  const Tensor& grad_view(std::size_t id) const { return nodes_[id].grad; }
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Replays adjoints from a scalar loss and adds the results into the
  /// gradients of every Parameter reached.
  void backward(Var loss) {
    if (loss.tape != this || loss.id >= nodes_.size())
      throw std::invalid_argument("backward: loss is not recorded on this tape");
    if (nodes_[loss.id].value.size() != 1)
      throw ShapeError("backward: loss must be a scalar, got " + shape_str(nodes_[loss.id].value.shape()));
    grad(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.requires_grad) continue;
      if (!n.grad.all_finite())
        throw NumericError(std::string("non-finite gradient flowing into '") + n.op + "'");
      if (n.param != nullptr) {
        auto gv = n.param->grad.values();
        auto src = n.grad.values();
        for (std::size_t k = 0; k < gv.size(); ++k) gv[k] += src[k];
      } else if (n.backward) {
        n.backward(*this, i);
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    const char* op = "";
    Parameter* param = nullptr;
    Backward backward;
  };

  Var push(const char* op, Tensor value, bool requires_grad, Parameter* p, Backward backward) {
    if (!value.all_finite()) throw NumericError(std::string("non-finite value produced by '") + op + "'");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    n.param = p;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  void check_owned(Var v, const char* op) const {
    if (v.tape != this || v.id >= nodes_.size())
      throw std::invalid_argument(std::string(op) + ": operand belongs to a different tape");
  }

  std::deque<Node> nodes_;  // deque: references to values stay valid while recording
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::unordered_map<const Parameter*, std::size_t> frozen_nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

}  // namespace seqvae
