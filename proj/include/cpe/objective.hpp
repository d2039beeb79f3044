#pragma once

#include <optional>
#include <span>

#include "cpe/loss.hpp"

namespace cpe {

struct ObjectiveConfig {
  NormVariant norm_variant = NormVariant::l2;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  bool conf_enabled = true;
  bool mask_enabled = true;
  /// Unset means 1.5 / C.
  std::optional<double> t1;
  double t2 = 0.2;
  ConfidenceAggregation aggregation = ConfidenceAggregation::per_dimension;
  ConfidenceReduction reduction = ConfidenceReduction::log_of_mean;

  double resolved_t1(std::size_t num_classes) const;
};

/// Every intermediate of one forward pass of the objective.
struct ObjectiveTerms {
  EmbeddingVars embedding;
  Var samples;         // N x D
  Var masked_centers;  // D x C, W with mask applied
  Var logits;          // N x C
  ConfidenceVars confidence;
  Var l_ce;
  Var l_norm;
  Var l_conf;
  Var total;
  OverlyMask mask;
  LossBreakdown breakdown;
};

/// encode -> reparameterize with `eps` -> build mask from batch confidence ->
/// CE on masked centers + lambda1 * norm term + lambda2 * confidence loss.
/// The confidence loss sees the unmasked centers. Passing `fixed_mask`
/// skips mask construction and uses the given mask instead.
ObjectiveTerms cpe_objective(const EncoderVars& encoder, const Var& centers, const Var& features,
                             std::span<const int> labels, const Tensor& eps, const ObjectiveConfig& config,
                             const OverlyMask* fixed_mask = nullptr);

}  // namespace cpe
