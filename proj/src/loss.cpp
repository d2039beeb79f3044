#include "cpe/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "cpe/diff/erf.hpp"

namespace cpe {

std::string to_string(NormVariant v) {
  switch (v) {
    case NormVariant::kl: return "kl";
    case NormVariant::l2: return "l2";
    case NormVariant::none: return "none";
  }
  return "none";
}

NormVariant parse_norm_variant(const std::string& s) {
  if (s == "kl") return NormVariant::kl;
  if (s == "l2") return NormVariant::l2;
  if (s == "none") return NormVariant::none;
  throw InputError(fmt::format("unknown norm variant '{}' (expected kl, l2 or none)", s));
}

namespace {

void check_labels(const char* op, std::span<const int> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows) {
    throw ShapeError(op, fmt::format("{} labels for {} rows", labels.size(), rows));
  }
  if (rows == 0) throw InputError(fmt::format("{}: empty batch", op));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw InputError(fmt::format("{}: label {} at row {} outside [0, {})", op, labels[i], i, classes));
    }
  }
}

}  // namespace

ConfidenceVars n_confidence(const Var& centers, const Var& mu, const Var& sigma,
                            ConfidenceAggregation aggregation) {
  const Shape& w = centers.shape();
  const Shape& m = mu.shape();
  if (w.size() != 2 || m.size() != 2 || m[1] != w[0]) throw ShapeError("n_confidence", m, w);
  if (sigma.shape() != m) throw ShapeError("n_confidence", m, sigma.shape());
  const std::size_t n = m[0];
  const std::size_t c = w[1];

  // All three operands become N x D x C.
  const Var w3 = diff::expand(centers, 0, n);
  const Var mu3 = diff::expand(mu, 2, c);
  const Var sigma3 = diff::expand(sigma, 2, c);
  const Var score = -(diff::square(w3 - mu3) / (2.0 * diff::square(sigma3)));

  ConfidenceVars out;
  out.per_dim = diff::softmax(score, 2);
  if (aggregation == ConfidenceAggregation::per_dimension) {
    out.per_class = diff::mean(out.per_dim, 1);
  } else {
    out.per_class = diff::softmax(diff::sum(score, 1), 1);
  }
  return out;
}

Tensor confidence_erf(const Tensor& centers, const GaussianEmbedding& emb) {
  if (centers.rank() != 2 || emb.mu.size() != centers.dim(0) || emb.sigma.size() != emb.mu.size()) {
    throw ShapeError("confidence_erf", centers.shape(), emb.mu.shape());
  }
  const std::size_t d = centers.dim(0);
  const std::size_t c = centers.dim(1);
  Tensor out({d, c});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const double diffv = centers.at(i, k) - emb.mu[i];
      out.at(i, k) = diff::erf_value(diffv * diffv / (2.0 * emb.sigma[i] * emb.sigma[i]));
    }
  }
  return out;
}

Var cross_entropy(const Var& samples, const Var& centers, std::span<const int> labels) {
  return cross_entropy_from_logits(diff::matmul(samples, centers), labels);
}

Var cross_entropy_from_logits(const Var& logits, std::span<const int> labels) {
  if (logits.shape().size() != 2) throw ShapeError("cross_entropy", "expected N x C logits");
  check_labels("cross_entropy", labels, logits.shape()[0], logits.shape()[1]);
  return -diff::mean(diff::pick(diff::log_softmax(logits, 1), labels));
}

Var confidence_loss(const Var& per_class, std::span<const int> labels, ConfidenceReduction reduction) {
  if (per_class.shape().size() != 2) throw ShapeError("confidence_loss", "expected N x C confidences");
  check_labels("confidence_loss", labels, per_class.shape()[0], per_class.shape()[1]);
  const Var truth = diff::pick(per_class, labels);
  if (reduction == ConfidenceReduction::log_of_mean) return -diff::log(diff::mean(truth));
  return -diff::mean(diff::log(truth));
}

Var kl_regularizer(const Var& mu, const Var& sigma) {
  if (mu.shape() != sigma.shape() || mu.shape().size() != 2) {
    throw ShapeError("kl_regularizer", mu.shape(), sigma.shape());
  }
  const Var var = diff::square(sigma);
  const Var per_entry = -0.5 * (1.0 + diff::log(var) - diff::square(mu) - var);
  return diff::mean(diff::sum(per_entry, 1));
}

Var l2_regularizer(const Var& sigma) { return -diff::mean(diff::square(sigma)); }

OverlyMask OverlyMask::ones(std::size_t latent_dim, std::size_t num_classes) {
  return {Tensor::filled({latent_dim, num_classes}, 1.0)};
}

std::size_t OverlyMask::masked_count() const {
  return static_cast<std::size_t>(std::count(mask.values().begin(), mask.values().end(), 0.0));
}

Tensor batch_mean_confidence(const Tensor& per_dim) {
  if (per_dim.rank() != 3) throw ShapeError("batch_mean_confidence", "expected N x D x C confidences");
  const std::size_t n = per_dim.dim(0);
  const std::size_t dc = per_dim.dim(1) * per_dim.dim(2);
  Tensor out({per_dim.dim(1), per_dim.dim(2)});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dc; ++j) out[j] += per_dim[i * dc + j];
  }
  for (double& v : out.data()) v /= static_cast<double>(n);
  return out;
}

OverlyMask build_overly_mask(const Tensor& mean_confidence, double t1, double t2) {
  if (mean_confidence.rank() != 2) throw ShapeError("build_overly_mask", "expected D x C confidences");
  const std::size_t d = mean_confidence.dim(0);
  const std::size_t c = mean_confidence.dim(1);
  OverlyMask out = OverlyMask::ones(d, c);
  for (std::size_t i = 0; i < d; ++i) {
    double min_high = std::numeric_limits<double>::infinity();
    double max_low = -std::numeric_limits<double>::infinity();
    bool any_high = false;
    bool any_low = false;
    for (std::size_t k = 0; k < c; ++k) {
      const double v = mean_confidence.at(i, k);
      if (v > t1) {
        any_high = true;
        min_high = std::min(min_high, v);
      } else {
        any_low = true;
        max_low = std::max(max_low, v);
      }
    }
    if (!any_high || !any_low || !(min_high - max_low > t2)) continue;
    for (std::size_t k = 0; k < c; ++k) {
      if (mean_confidence.at(i, k) > t1) out.mask.at(i, k) = 0.0;
    }
  }
  return out;
}

Var apply_mask(const Var& centers, const OverlyMask& mask) {
  if (centers.shape() != mask.mask.shape()) throw ShapeError("apply_mask", centers.shape(), mask.mask.shape());
  return centers * centers.tape()->constant(mask.mask);
}

LossBreakdown total_loss(double l_ce, double l_norm, double l_conf, double lambda1, double lambda2,
                         NormVariant variant) {
  if (lambda1 < 0.0 || lambda2 < 0.0) {
    throw InputError(fmt::format("total_loss: weights must be non-negative (lambda1={}, lambda2={})", lambda1,
                                 lambda2));
  }
  LossBreakdown b;
  b.l_ce = l_ce;
  b.l_norm = l_norm;
  b.l_conf = l_conf;
  b.norm_variant = variant;
  b.lambda1 = lambda1;
  b.lambda2 = lambda2;
  b.total = l_ce + lambda1 * l_norm + lambda2 * l_conf;
  return b;
}

Var compose_total(const Var& l_ce, const Var& l_norm, const Var& l_conf, double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw InputError("compose_total: weights must be non-negative");
  return l_ce + l_norm * lambda1 + l_conf * lambda2;
}

}  // namespace cpe
