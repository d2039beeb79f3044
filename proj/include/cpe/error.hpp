#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpe {

using Shape = std::vector<std::size_t>;

std::string format_shape(const Shape& shape);

/// Two operands whose shapes cannot be combined.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, Shape lhs, Shape rhs);
  ShapeError(const std::string& op, const std::string& what);

  const Shape& lhs() const noexcept { return lhs_; }
  const Shape& rhs() const noexcept { return rhs_; }

 private:
  Shape lhs_;
  Shape rhs_;
};

/// Input outside the mathematical domain of an operation (log of x <= 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid configuration, malformed input file, bad label, empty split.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace cpe
