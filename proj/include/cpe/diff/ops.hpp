#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "cpe/diff/tape.hpp"

// Differentiable operations. Binary elementwise ops accept equal shapes or a
// single-element operand broadcast against the other; nothing else.
namespace cpe::diff {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);

Var exp(const Var& x);
Var log(const Var& x);
Var square(const Var& x);
Var tanh(const Var& x);
Var erf(const Var& x);
/// max(x, floor) elementwise; gradient passes only where x > floor.
Var clamp_min(const Var& x, double floor);

/// [N x D] . [D x C] -> [N x C]
Var matmul(const Var& a, const Var& b);

Var softmax(const Var& x, std::size_t axis);
Var log_softmax(const Var& x, std::size_t axis);

/// Reductions over one axis (removing it) or over everything (rank-0 result).
Var sum(const Var& x, std::optional<std::size_t> axis = std::nullopt);
Var mean(const Var& x, std::optional<std::size_t> axis = std::nullopt);
Var max(const Var& x, std::optional<std::size_t> axis = std::nullopt);

Var reshape(const Var& x, Shape shape);
/// Inserts a new axis at `axis` and repeats x `count` times along it.
Var expand(const Var& x, std::size_t axis, std::size_t count);
/// Row-wise selection from an [N x K] tensor: out[n] = x[n, index[n]].
Var pick(const Var& x, std::span<const int> index);

Var scalar(Tape& tape, double value);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(const Var& a, double b);
Var operator-(double a, const Var& b);
Var operator*(const Var& a, double b);
Var operator*(double a, const Var& b);
Var operator/(const Var& a, double b);

}  // namespace cpe::diff
