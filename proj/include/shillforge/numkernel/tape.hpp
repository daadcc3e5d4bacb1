#pragma once

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

#include "shillforge/numkernel/tensor.hpp"

namespace shillforge::nk {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Local backward rule. `grad_inputs[i]` is null when input i needs no gradient;
/// otherwise the rule adds its contribution into it.
using BackwardRule =
    std::function<void(const Tensor& grad_output, std::vector<Tensor*>& grad_inputs)>;

/// Gradients of a scalar with respect to the requires-grad leaves of a tape.
class Gradients {
 public:
  const Tensor& operator[](Var leaf) const;
  bool contains(Var leaf) const { return grads_.contains(leaf.id()); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

/// Append-only record of primitive evaluations. Nodes are stored in creation
/// order, so every node's inputs precede it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an operation. The rule is dropped when no input requires a gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardRule rule);

  /// Reverse sweep from a single-element output. Accumulators start at zero on
  /// every call; leaves unreachable from `output` receive zero gradients.
  Gradients backward(Var output) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    bool requires_grad = false;
    bool is_leaf = false;
  };
  std::vector<Node> nodes_;
};

}  // namespace shillforge::nk
