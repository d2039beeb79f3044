#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace cpe {

struct GradcheckOptions {
  std::size_t cases = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  /// Routes every objective through a node whose backward is off by 1%.
  /// Exists so callers can confirm the suite actually fails.
  bool inject_fault = false;
};

struct OpCheckResult {
  std::string op;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
  std::size_t worst_case = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  /// Cases in which the overly mask zeroed at least one entry (objective checks only).
  std::size_t masked_cases = 0;
  std::string diagnostic;

  bool passed() const { return failures == 0 && diagnostic.empty(); }
};

struct GradcheckReport {
  std::vector<OpCheckResult> ops;
  double tolerance = 0.0;
  double seconds = 0.0;

  bool passed() const;
  nlohmann::ordered_json to_json() const;
  std::string render_text() const;
};

/// Randomized central-difference checks of every differentiable op and of
/// the full objective (all terms weighted, mask on).
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace cpe
