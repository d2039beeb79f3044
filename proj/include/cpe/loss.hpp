#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "cpe/encoder.hpp"

namespace cpe {

enum class NormVariant { kl, l2, none };

std::string to_string(NormVariant v);
NormVariant parse_norm_variant(const std::string& s);

/// How per-class confidence is formed from squared center distances.
enum class ConfidenceAggregation {
  /// Softmax over classes in each latent dimension, then mean over dimensions.
  per_dimension,
  /// Softmax over classes of the distance summed across dimensions.
  dimension_summed,
};

/// How the batch of true-class confidences becomes a loss.
enum class ConfidenceReduction {
  /// -log(mean_i conf_i)
  log_of_mean,
  /// -mean_i log(conf_i)
  mean_of_logs,
};

/// Normalized confidences for a batch. Class centers are columns of the
/// D x C matrix, so the per-dimension tensor is laid out N x D x C with the
/// class index innermost.
struct ConfidenceVars {
  Var per_dim;    // N x D x C, sums to 1 over C
  Var per_class;  // N x C
};

/// Confidence of class c in dimension d: softmax over c of
/// -(W[d,c] - mu[d])^2 / (2 sigma[d]^2).
ConfidenceVars n_confidence(const Var& centers, const Var& mu, const Var& sigma,
                            ConfidenceAggregation aggregation = ConfidenceAggregation::per_dimension);

/// erf((W[d,c] - mu[d])^2 / (2 sigma[d]^2)) for a single embedding, D x C.
/// Diagnostic only; not part of any objective.
Tensor confidence_erf(const Tensor& centers, const GaussianEmbedding& emb);

/// Mean softmax cross-entropy of logits samples . centers against labels.
Var cross_entropy(const Var& samples, const Var& centers, std::span<const int> labels);
/// Mean softmax cross-entropy of precomputed N x C logits.
Var cross_entropy_from_logits(const Var& logits, std::span<const int> labels);

Var confidence_loss(const Var& per_class, std::span<const int> labels,
                    ConfidenceReduction reduction = ConfidenceReduction::log_of_mean);

/// Batch mean of sum_d -1/2 (1 + log sigma^2 - mu^2 - sigma^2).
Var kl_regularizer(const Var& mu, const Var& sigma);

/// Negative mean variance over batch and dimensions.
Var l2_regularizer(const Var& sigma);

/// Binary D x C mask over class-center entries; 1 keeps an entry.
struct OverlyMask {
  Tensor mask;

  static OverlyMask ones(std::size_t latent_dim, std::size_t num_classes);
  std::size_t masked_count() const;
  bool operator==(const OverlyMask&) const = default;
};

/// Mean over the batch axis of an N x D x C confidence tensor.
Tensor batch_mean_confidence(const Tensor& per_dim);

/// For each latent dimension d, split classes into a high group
/// (confidence > t1) and a low group (<= t1). When both groups are non-empty
/// and min(high) - max(low) > t2, the high entries of that dimension are
/// masked. Input is a D x C batch-mean confidence matrix.
OverlyMask build_overly_mask(const Tensor& mean_confidence, double t1, double t2);

Var apply_mask(const Var& centers, const OverlyMask& mask);

struct LossBreakdown {
  double l_ce = 0.0;
  double l_conf = 0.0;
  double l_norm = 0.0;
  NormVariant norm_variant = NormVariant::l2;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double total = 0.0;
};

/// total = l_ce + lambda1 * l_norm + lambda2 * l_conf. Negative weights throw.
LossBreakdown total_loss(double l_ce, double l_norm, double l_conf, double lambda1, double lambda2,
                         NormVariant variant);

/// Same weighted sum on the tape, with the same floating-point evaluation
/// order as total_loss.
Var compose_total(const Var& l_ce, const Var& l_norm, const Var& l_conf, double lambda1, double lambda2);

}  // namespace cpe
