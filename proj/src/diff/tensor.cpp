#include "cpe/diff/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace cpe {

std::string format_shape(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ",")); }

ShapeError::ShapeError(const std::string& op, Shape lhs, Shape rhs)
    : std::invalid_argument(
          fmt::format("{}: incompatible shapes {} and {}", op, format_shape(lhs), format_shape(rhs))),
      lhs_(std::move(lhs)),
      rhs_(std::move(rhs)) {}

ShapeError::ShapeError(const std::string& op, const std::string& what)
    : std::invalid_argument(fmt::format("{}: {}", op, what)) {}

}  // namespace cpe

namespace cpe::diff {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("Tensor", fmt::format("shape {} holds {} elements but {} values were given",
                                           format_shape(shape_), shape_size(shape_), data_.size()));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Tensor::matrix", "ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("Tensor::dim", fmt::format("axis {} out of range for {}", axis, format_shape(shape_)));
  }
  return shape_[axis];
}

double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("Tensor::item", fmt::format("expected one element, got shape {}", format_shape(shape_)));
  }
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace cpe::diff
