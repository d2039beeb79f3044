#include "cpe/diff/fdcheck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include <fmt/format.h>

#include "cpe/error.hpp"

namespace cpe::diff {
namespace {

double evaluate(const ScalarObjective& f, const std::vector<NamedTensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p.value));
  return f(tape, leaves).value().item();
}

}  // namespace

double FdReport::max_rel_error() const {
  double worst_error = 0.0;
  for (const auto& p : params) worst_error = std::max(worst_error, p.max_rel_error);
  return worst_error;
}

const FdParamReport* FdReport::worst() const {
  const FdParamReport* out = nullptr;
  for (const auto& p : params) {
    if (out == nullptr || p.max_rel_error > out->max_rel_error) out = &p;
  }
  return out;
}

std::pair<double, std::vector<Tensor>> value_and_gradients(const ScalarObjective& f,
                                                           const std::vector<NamedTensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p.value));
  const Var root = f(tape, leaves);
  const Gradients grads = tape.backward(root);
  std::vector<Tensor> out;
  out.reserve(leaves.size());
  for (const auto& leaf : leaves) out.push_back(grads[leaf]);
  return {root.value().item(), std::move(out)};
}

FdReport finite_difference_check(const ScalarObjective& f, const std::vector<NamedTensor>& params,
                                 const FdOptions& options) {
  if (!(options.step > 0.0)) throw InputError("finite_difference_check: step must be positive");

  FdReport report;
  const auto [base, analytic] = value_and_gradients(f, params);
  const double again = evaluate(f, params);
  if (std::bit_cast<std::uint64_t>(base) != std::bit_cast<std::uint64_t>(again)) {
    report.aborted = true;
    report.diagnostic =
        fmt::format("objective is not deterministic: {:.17g} then {:.17g} at identical inputs", base, again);
    return report;
  }

  std::vector<NamedTensor> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    FdParamReport entry;
    entry.name = params[p].name;
    for (std::size_t i = 0; i < params[p].value.size(); ++i) {
      const double original = params[p].value[i];
      probe[p].value[i] = original + options.step;
      const double up = evaluate(f, probe);
      probe[p].value[i] = original - options.step;
      const double down = evaluate(f, probe);
      probe[p].value[i] = original;

      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[p][i];
      double err = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
      if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
      if (i == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.params.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error() < options.tolerance;
  return report;
}

}  // namespace cpe::diff
