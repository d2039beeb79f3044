#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cpe/diff/tape.hpp"

namespace cpe::diff {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Builds a scalar on `tape` from leaves bound to the given parameters.
/// Must be deterministic: the checker evaluates it many times.
using ScalarObjective = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct FdOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
};

struct FdParamReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct FdReport {
  bool passed = false;
  bool aborted = false;
  std::string diagnostic;
  std::vector<FdParamReport> params;

  double max_rel_error() const;
  const FdParamReport* worst() const;
};

/// Compares reverse-mode gradients against central differences. The error
/// per entry is |analytic - numeric| / max(1, |analytic|).
FdReport finite_difference_check(const ScalarObjective& f, const std::vector<NamedTensor>& params,
                                 const FdOptions& options = {});

/// Evaluates f at params and returns (value, gradient per parameter).
std::pair<double, std::vector<Tensor>> value_and_gradients(const ScalarObjective& f,
                                                           const std::vector<NamedTensor>& params);

}  // namespace cpe::diff
