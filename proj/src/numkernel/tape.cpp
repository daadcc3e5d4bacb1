#include "shillforge/numkernel/tape.hpp"

#include <optional>

namespace shillforge::nk {

const Tensor& Var::value() const {
  if (!tape_) throw ContractViolation("Var: not attached to a tape");
  return tape_->value(id_);
}

bool Var::requires_grad() const {
  if (!tape_) throw ContractViolation("Var: not attached to a tape");
  return tape_->requires_grad(id_);
}

const Tensor& Gradients::operator[](Var leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) {
    throw ContractViolation("Gradients: node " + std::to_string(leaf.id()) +
                            " is not a requires-grad leaf");
  }
  return it->second;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, {}, requires_grad, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardRule rule) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape() != this) throw ContractViolation("Tape::record: input from a different tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.rule = std::move(rule);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var output) const {
  if (output.tape() != this) throw ContractViolation("Tape::backward: output from a different tape");
  const Tensor& out = nodes_[output.id()].value;
  if (out.size() != 1) {
    throw ContractViolation("Tape::backward: scalar output required, got shape " +
                            to_string(out.shape()));
  }

  std::vector<std::optional<Tensor>> grads(output.id() + 1);
  if (nodes_[output.id()].requires_grad) grads[output.id()] = Tensor(out.shape(), 1.0);

  std::vector<Tensor*> slots;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!grads[id] || node.is_leaf || !node.rule) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor::zeros_like(nodes_[in].value);
      slots[k] = &*grads[in];
    }
    node.rule(*grads[id], slots);
    grads[id].reset();  // interior gradients are dead once propagated
  }

  Gradients result;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (!node.is_leaf || !node.requires_grad) continue;
    if (id < grads.size() && grads[id]) {
      result.grads_.emplace(id, std::move(*grads[id]));
    } else {
      result.grads_.emplace(id, Tensor::zeros_like(node.value));
    }
  }
  return result;
}

}  // namespace shillforge::nk
