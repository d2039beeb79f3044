#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpe/diff/tensor.hpp"

namespace cpe {

using diff::Tensor;

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled (AdamW-style) weight decay; 0 disables it.
  double weight_decay = 0.0;
};

/// Adam with bias correction over an ordered list of named parameters.
class Adam {
 public:
  explicit Adam(AdamOptions options = {});

  /// Applies one update. `names`, `params` and `grads` are parallel. Throws
  /// before touching any state if a gradient entry is non-finite.
  void step(const std::vector<std::string>& names, const std::vector<Tensor*>& params,
            const std::vector<Tensor>& grads);

  std::uint64_t step_count() const noexcept { return step_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace cpe
