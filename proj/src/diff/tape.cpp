#include "cpe/diff/tape.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace cpe::diff {

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::neg: return "neg";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::square: return "square";
    case OpKind::tanh: return "tanh";
    case OpKind::erf: return "erf";
    case OpKind::clamp_min: return "clamp_min";
    case OpKind::matmul: return "matmul";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::max: return "max";
    case OpKind::reshape: return "reshape";
    case OpKind::expand: return "expand";
    case OpKind::pick: return "pick";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("Var: unbound handle");
  return tape_->node(id_).value;
}

Var Tape::leaf(Tensor value) { return record(OpKind::leaf, {}, std::move(value), nullptr); }

Var Tape::constant(Tensor value) { return record(OpKind::constant, {}, std::move(value), nullptr); }

Var Tape::record(OpKind op, std::vector<NodeId> parents, Tensor value, BackwardFn backward) {
  for (NodeId p : parents) {
    if (p >= nodes_.size()) throw std::logic_error("Tape::record: parent recorded after child");
  }
  nodes_.push_back(TapeNode{op, std::move(parents), std::move(value), std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& root) const {
  if (root.tape() != this) throw std::logic_error("Tape::backward: root belongs to another tape");
  const Tensor& root_value = nodes_.at(root.id()).value;
  if (root_value.size() != 1) {
    throw ShapeError("backward", fmt::format("root must be scalar-valued, got shape {}",
                                             format_shape(root_value.shape())));
  }

  std::vector<Tensor> grads;
  grads.reserve(nodes_.size());
  for (const auto& n : nodes_) grads.emplace_back(n.value.shape());
  std::vector<bool> reached(nodes_.size(), false);

  grads[root.id()][0] = 1.0;
  reached[root.id()] = true;

  // Parents always precede children, so a descending sweep is a reverse
  // topological order.
  for (NodeId i = root.id() + 1; i-- > 0;) {
    const TapeNode& n = nodes_[i];
    if (!reached[i] || !n.backward) continue;
    std::vector<Tensor> contributions = n.backward(grads[i]);
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      const NodeId p = n.parents[k];
      auto dst = grads[p].data();
      auto src = contributions[k].data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      reached[p] = true;
    }
  }
  return Gradients(std::move(grads));
}

}  // namespace cpe::diff
