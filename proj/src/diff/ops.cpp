#include "cpe/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "cpe/diff/erf.hpp"

namespace cpe::diff {
namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw std::logic_error("diff: operands live on different tapes");
  }
  return *a.tape();
}

Tape& tape_of(const Var& x) {
  if (x.tape() == nullptr) throw std::logic_error("diff: unbound Var");
  return *x.tape();
}

enum class Broadcast { equal, lhs_scalar, rhs_scalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::equal;
  if (a.size() == 1 && a.rank() <= b.rank()) return Broadcast::lhs_scalar;
  if (b.size() == 1) return Broadcast::rhs_scalar;
  throw ShapeError(op, a.shape(), b.shape());
}

// Reduce an elementwise contribution back to an operand's shape.
Tensor reduce_to(const Tensor& g, const Tensor& operand) {
  if (g.shape() == operand.shape()) return g;
  double total = 0.0;
  for (double v : g.data()) total += v;
  return Tensor(operand.shape(), {total});
}

template <typename Fwd, typename DA, typename DB>
Var binary(OpKind op, const Var& a, const Var& b, Fwd fwd, DA da, DB db) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(op_name(op).data(), av, bv);
  const Shape out_shape = kind == Broadcast::lhs_scalar ? bv.shape() : av.shape();
  const std::size_t n = shape_size(out_shape);
  auto lhs = [&av, kind](std::size_t i) { return kind == Broadcast::lhs_scalar ? av[0] : av[i]; };
  auto rhs = [&bv, kind](std::size_t i) { return kind == Broadcast::rhs_scalar ? bv[0] : bv[i]; };

  Tensor out(out_shape);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(lhs(i), rhs(i));

  return tape.record(op, {a.id(), b.id()}, std::move(out),
                     [av, bv, kind, n, da, db](const Tensor& g) {
                       Tensor ga(g.shape());
                       Tensor gb(g.shape());
                       for (std::size_t i = 0; i < n; ++i) {
                         const double x = kind == Broadcast::lhs_scalar ? av[0] : av[i];
                         const double y = kind == Broadcast::rhs_scalar ? bv[0] : bv[i];
                         ga[i] = g[i] * da(x, y);
                         gb[i] = g[i] * db(x, y);
                       }
                       return std::vector<Tensor>{reduce_to(ga, av), reduce_to(gb, bv)};
                     });
}

// dfn receives (input, output).
template <typename Fwd, typename Dfn>
Var unary(OpKind op, const Var& x, Fwd fwd, Dfn dfn) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return tape.record(op, {x.id()}, out, [xv, out, dfn](const Tensor& g) {
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] = g[i] * dfn(xv[i], out[i]);
    return std::vector<Tensor>{std::move(gx)};
  });
}

struct AxisLayout {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;

  std::size_t index(std::size_t o, std::size_t k, std::size_t i) const { return (o * len + k) * inner + i; }
};

AxisLayout layout(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError(op, fmt::format("axis {} invalid for shape {}", axis, format_shape(shape)));
  }
  AxisLayout l;
  for (std::size_t d = 0; d < axis; ++d) l.outer *= shape[d];
  l.len = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) l.inner *= shape[d];
  return l;
}

Shape without_axis(const Shape& shape, std::size_t axis) {
  Shape out = shape;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

enum class ReduceKind { sum, mean, max };

Var reduce(OpKind op, ReduceKind kind, const Var& x, std::optional<std::size_t> axis) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  const char* name = op_name(op).data();
  if (xv.size() == 0) throw ShapeError(name, "reduction over an empty tensor");

  AxisLayout l;
  Shape out_shape;
  if (axis) {
    l = layout(name, xv.shape(), *axis);
    out_shape = without_axis(xv.shape(), *axis);
  } else {
    l.len = xv.size();
  }
  if (l.len == 0) throw ShapeError(name, "reduction over a zero-length axis");

  Tensor out(out_shape);
  std::vector<std::size_t> argmax(out.size(), 0);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t dst = o * l.inner + i;
      if (kind == ReduceKind::max) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < l.len; ++k) {
          if (xv[l.index(o, k, i)] > xv[l.index(o, best, i)]) best = k;
        }
        argmax[dst] = best;
        out[dst] = xv[l.index(o, best, i)];
      } else {
        double acc = 0.0;
        for (std::size_t k = 0; k < l.len; ++k) acc += xv[l.index(o, k, i)];
        out[dst] = kind == ReduceKind::mean ? acc / static_cast<double>(l.len) : acc;
      }
    }
  }

  const Shape in_shape = xv.shape();
  return tape.record(op, {x.id()}, std::move(out), [in_shape, l, kind, argmax](const Tensor& g) {
    Tensor gx(in_shape);
    const double scale = kind == ReduceKind::mean ? 1.0 / static_cast<double>(l.len) : 1.0;
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t src = o * l.inner + i;
        if (kind == ReduceKind::max) {
          gx[l.index(o, argmax[src], i)] = g[src];
        } else {
          for (std::size_t k = 0; k < l.len; ++k) gx[l.index(o, k, i)] = g[src] * scale;
        }
      }
    }
    return std::vector<Tensor>{std::move(gx)};
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      OpKind::add, a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      OpKind::sub, a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      OpKind::mul, a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  for (double v : b.value().data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      OpKind::div, a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var neg(const Var& a) {
  return unary(
      OpKind::neg, a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var exp(const Var& x) {
  return unary(
      OpKind::exp, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw DomainError(fmt::format("log: argument {} is not positive", v));
  }
  return unary(
      OpKind::log, x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(const Var& x) {
  return unary(
      OpKind::square, x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var tanh(const Var& x) {
  return unary(
      OpKind::tanh, x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var erf(const Var& x) {
  return unary(
      OpKind::erf, x, [](double v) { return erf_value(v); }, [](double v, double) { return erf_derivative(v); });
}

Var clamp_min(const Var& x, double floor) {
  return unary(
      OpKind::clamp_min, x, [floor](double v) { return v > floor ? v : floor; },
      [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Var matmul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
    throw ShapeError("matmul", av.shape(), bv.shape());
  }
  const std::size_t n = av.shape()[0];
  const std::size_t k = av.shape()[1];
  const std::size_t m = bv.shape()[1];

  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aip * bv[p * m + j];
    }
  }

  return tape.record(OpKind::matmul, {a.id(), b.id()}, std::move(out), [av, bv, n, k, m](const Tensor& g) {
    Tensor ga({n, k});  // G . B^T
    Tensor gb({k, m});  // A^T . G
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * bv[p * m + j];
        ga[i * k + p] = acc;
      }
    }
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t i = 0; i < n; ++i) {
        const double aip = av[i * k + p];
        for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * g[i * m + j];
      }
    }
    return std::vector<Tensor>{std::move(ga), std::move(gb)};
  });
}

Var softmax(const Var& x, std::size_t axis) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  const AxisLayout l = layout("softmax", xv.shape(), axis);
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l.len; ++k) hi = std::max(hi, xv[l.index(o, k, i)]);
      double total = 0.0;
      for (std::size_t k = 0; k < l.len; ++k) {
        const double e = std::exp(xv[l.index(o, k, i)] - hi);
        out[l.index(o, k, i)] = e;
        total += e;
      }
      for (std::size_t k = 0; k < l.len; ++k) out[l.index(o, k, i)] /= total;
    }
  }
  return tape.record(OpKind::softmax, {x.id()}, out, [out, l](const Tensor& g) {
    // dx = y * (g - sum(g * y))
    Tensor gx(out.shape());
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < l.len; ++k) dot += g[l.index(o, k, i)] * out[l.index(o, k, i)];
        for (std::size_t k = 0; k < l.len; ++k) {
          const std::size_t j = l.index(o, k, i);
          gx[j] = out[j] * (g[j] - dot);
        }
      }
    }
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var log_softmax(const Var& x, std::size_t axis) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  const AxisLayout l = layout("log_softmax", xv.shape(), axis);
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l.len; ++k) hi = std::max(hi, xv[l.index(o, k, i)]);
      double total = 0.0;
      for (std::size_t k = 0; k < l.len; ++k) total += std::exp(xv[l.index(o, k, i)] - hi);
      const double lse = hi + std::log(total);
      for (std::size_t k = 0; k < l.len; ++k) out[l.index(o, k, i)] = xv[l.index(o, k, i)] - lse;
    }
  }
  return tape.record(OpKind::log_softmax, {x.id()}, out, [out, l](const Tensor& g) {
    // dx = g - softmax * sum(g)
    Tensor gx(out.shape());
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        double total = 0.0;
        for (std::size_t k = 0; k < l.len; ++k) total += g[l.index(o, k, i)];
        for (std::size_t k = 0; k < l.len; ++k) {
          const std::size_t j = l.index(o, k, i);
          gx[j] = g[j] - std::exp(out[j]) * total;
        }
      }
    }
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var sum(const Var& x, std::optional<std::size_t> axis) { return reduce(OpKind::sum, ReduceKind::sum, x, axis); }

Var mean(const Var& x, std::optional<std::size_t> axis) { return reduce(OpKind::mean, ReduceKind::mean, x, axis); }

Var max(const Var& x, std::optional<std::size_t> axis) { return reduce(OpKind::max, ReduceKind::max, x, axis); }

Var reshape(const Var& x, Shape shape) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  if (shape_size(shape) != xv.size()) throw ShapeError("reshape", xv.shape(), shape);
  const Shape in_shape = xv.shape();
  return tape.record(OpKind::reshape, {x.id()}, Tensor(std::move(shape), xv.values()),
                     [in_shape](const Tensor& g) { return std::vector<Tensor>{Tensor(in_shape, g.values())}; });
}

Var expand(const Var& x, std::size_t axis, std::size_t count) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  if (axis > xv.rank()) {
    throw ShapeError("expand", fmt::format("axis {} invalid for shape {}", axis, format_shape(xv.shape())));
  }
  Shape out_shape = xv.shape();
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
  const AxisLayout l = layout("expand", out_shape, axis);

  Tensor out(out_shape);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t k = 0; k < l.len; ++k) {
      for (std::size_t i = 0; i < l.inner; ++i) out[l.index(o, k, i)] = xv[o * l.inner + i];
    }
  }
  const Shape in_shape = xv.shape();
  return tape.record(OpKind::expand, {x.id()}, std::move(out), [in_shape, l](const Tensor& g) {
    Tensor gx(in_shape);
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t k = 0; k < l.len; ++k) {
        for (std::size_t i = 0; i < l.inner; ++i) gx[o * l.inner + i] += g[l.index(o, k, i)];
      }
    }
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var pick(const Var& x, std::span<const int> index) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.shape()[0] != index.size()) {
    throw ShapeError("pick", xv.shape(), Shape{index.size()});
  }
  const std::size_t n = xv.shape()[0];
  const std::size_t k = xv.shape()[1];
  std::vector<std::size_t> cols(n);
  Tensor out({n});
  for (std::size_t r = 0; r < n; ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= k) {
      throw InputError(fmt::format("pick: index {} at row {} outside [0, {})", index[r], r, k));
    }
    cols[r] = static_cast<std::size_t>(index[r]);
    out[r] = xv[r * k + cols[r]];
  }
  const Shape in_shape = xv.shape();
  return tape.record(OpKind::pick, {x.id()}, std::move(out), [in_shape, cols, k](const Tensor& g) {
    Tensor gx(in_shape);
    for (std::size_t r = 0; r < cols.size(); ++r) gx[r * k + cols[r]] = g[r];
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var scalar(Tape& tape, double value) { return tape.constant(Tensor::scalar(value)); }

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator-(const Var& a) { return neg(a); }
Var operator+(const Var& a, double b) { return add(a, scalar(tape_of(a), b)); }
Var operator+(double a, const Var& b) { return add(scalar(tape_of(b), a), b); }
Var operator-(const Var& a, double b) { return sub(a, scalar(tape_of(a), b)); }
Var operator-(double a, const Var& b) { return sub(scalar(tape_of(b), a), b); }
Var operator*(const Var& a, double b) { return mul(a, scalar(tape_of(a), b)); }
Var operator*(double a, const Var& b) { return mul(scalar(tape_of(b), a), b); }
Var operator/(const Var& a, double b) { return div(a, scalar(tape_of(a), b)); }

}  // namespace cpe::diff
