#include "cpe/adam.hpp"

#include <cmath>

#include <fmt/format.h>

#include "cpe/error.hpp"

namespace cpe {

Adam::Adam(AdamOptions options) : options_(options) {
  if (!(options_.learning_rate > 0.0)) throw InputError("adam: learning rate must be positive");
}

void Adam::step(const std::vector<std::string>& names, const std::vector<Tensor*>& params,
                const std::vector<Tensor>& grads) {
  if (params.size() != grads.size() || names.size() != params.size()) {
    throw InputError("adam: names, parameters and gradients must align");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p]->shape() != grads[p].shape()) throw ShapeError("adam", params[p]->shape(), grads[p].shape());
    for (std::size_t i = 0; i < grads[p].size(); ++i) {
      if (!std::isfinite(grads[p][i])) {
        throw DomainError(fmt::format("adam: non-finite gradient {} in parameter '{}' at entry {}", grads[p][i],
                                      names[p], i));
      }
    }
  }
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  } else if (m_.size() != params.size()) {
    throw InputError("adam: parameter list changed between steps");
  }

  ++step_;
  const double t = static_cast<double>(step_);
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = *params[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grads[p][i];
      m_[p][i] = b1 * m_[p][i] + (1.0 - b1) * g;
      v_[p][i] = b2 * v_[p][i] + (1.0 - b2) * g * g;
      const double m_hat = m_[p][i] / correction1;
      const double v_hat = v_[p][i] / correction2;
      if (options_.weight_decay > 0.0) theta[i] -= options_.learning_rate * options_.weight_decay * theta[i];
      theta[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

}  // namespace cpe
