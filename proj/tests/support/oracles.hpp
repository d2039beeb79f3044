#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cpe/data.hpp"

// Reference computations that share no code with the library under test.
namespace oracle {

/// (2/sqrt(pi)) * integral_0^x exp(-t^2) dt by adaptive Gauss-Kronrod.
double erf_by_quadrature(double x);

/// e^{x_i} / sum_j e^{x_j}, evaluated literally.
std::vector<double> softmax(const std::vector<double>& x);

/// Central differences of a scalar function of a flat vector.
std::vector<double> central_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double h = 1e-5);

/// Brute-force nearest class mean: means from the `fit` rows, accuracy on the `eval` rows.
double nearest_centroid_accuracy(const cpe::LabeledDataset& data, cpe::Split fit, cpe::Split eval);

/// Multinomial logistic regression fitted by full-batch gradient descent on
/// the train split; returns test accuracy.
double logistic_regression_accuracy(const cpe::LabeledDataset& data, std::size_t iterations = 500, double lr = 0.5);

}  // namespace oracle
