#pragma once

namespace cpe::diff {

/// Gauss error function, (2/sqrt(pi)) * integral_0^x exp(-t^2) dt.
/// Absolute error below 1e-14 on the real line; exactly odd.
double erf_value(double x);

/// d/dx erf(x) = (2/sqrt(pi)) exp(-x^2)
double erf_derivative(double x);

}  // namespace cpe::diff
