#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "cpe/diff/tensor.hpp"

namespace cpe::diff {

enum class OpKind {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  neg,
  exp,
  log,
  square,
  tanh,
  erf,
  clamp_min,
  matmul,
  softmax,
  log_softmax,
  sum,
  mean,
  max,
  reshape,
  expand,
  pick,
};

std::string_view op_name(OpKind op);

using NodeId = std::size_t;

/// Maps the upstream gradient of a node to one contribution per parent,
/// each shaped like the corresponding parent value.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& upstream)>;

struct TapeNode {
  OpKind op;
  std::vector<NodeId> parents;
  Tensor value;
  BackwardFn backward;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  NodeId id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Accumulated gradients, one tensor per tape node.
class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}
  const Tensor& operator[](const Var& v) const { return grads_.at(v.id()); }
  const Tensor& at(NodeId id) const { return grads_.at(id); }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
};

/// Append-only record of a forward evaluation.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input (parameter).
  Var leaf(Tensor value);
  /// Non-differentiable input; receives a gradient but it is never used.
  Var constant(Tensor value);
  Var record(OpKind op, std::vector<NodeId> parents, Tensor value, BackwardFn backward);

  const TapeNode& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a single-element root. Nodes not reachable from the
  /// root get zero gradients.
  Gradients backward(const Var& root) const;

 private:
  std::vector<TapeNode> nodes_;
};

}  // namespace cpe::diff
