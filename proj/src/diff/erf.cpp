#include "cpe/diff/erf.hpp"

#include <cmath>
#include <numbers>

namespace cpe::diff {
namespace {

constexpr double kTwoOverSqrtPi = 2.0 * std::numbers::inv_sqrtpi;
constexpr double kSeriesLimit = 2.5;
constexpr int kFractionDepth = 160;

// erf(x) = (2/sqrt(pi)) e^{-x^2} sum_n 2^n x^{2n+1} / (2n+1)!!
// All terms are positive, so there is no cancellation for moderate x.
double erf_series(double x) {
  const double x2 = x * x;
  double term = x;
  double total = x;
  for (int n = 1; n < 200; ++n) {
    term *= 2.0 * x2 / (2.0 * n + 1.0);
    total += term;
    if (term < 1e-17 * total) break;
  }
  return kTwoOverSqrtPi * std::exp(-x2) * total;
}

// erfc(x) = e^{-x^2}/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), x > 0
double erfc_fraction(double x) {
  double f = x;
  for (int k = kFractionDepth; k >= 1; --k) f = x + (0.5 * k) / f;
  return std::numbers::inv_sqrtpi * std::exp(-x * x) / f;
}

}  // namespace

double erf_value(double x) {
  if (std::isnan(x)) return x;
  const double ax = std::fabs(x);
  const double magnitude = ax < kSeriesLimit ? erf_series(ax) : 1.0 - erfc_fraction(ax);
  return x < 0.0 ? -magnitude : magnitude;
}

double erf_derivative(double x) { return kTwoOverSqrtPi * std::exp(-x * x); }

}  // namespace cpe::diff
