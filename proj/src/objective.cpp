#include "cpe/objective.hpp"

namespace cpe {

double ObjectiveConfig::resolved_t1(std::size_t num_classes) const {
  return t1.value_or(1.5 / static_cast<double>(num_classes));
}

ObjectiveTerms cpe_objective(const EncoderVars& encoder, const Var& centers, const Var& features,
                             std::span<const int> labels, const Tensor& eps, const ObjectiveConfig& config,
                             const OverlyMask* fixed_mask) {
  diff::Tape& tape = *centers.tape();
  const std::size_t latent = centers.shape()[0];
  const std::size_t classes = centers.shape()[1];
  const double lambda1 = config.norm_variant == NormVariant::none ? 0.0 : config.lambda1;
  const double lambda2 = config.conf_enabled ? config.lambda2 : 0.0;

  ObjectiveTerms t;
  t.embedding = encode(encoder, features);
  t.samples = reparameterize(t.embedding.mu, t.embedding.sigma, eps);
  t.confidence = n_confidence(centers, t.embedding.mu, t.embedding.sigma, config.aggregation);

  if (fixed_mask != nullptr) {
    t.mask = *fixed_mask;
  } else if (config.mask_enabled) {
    t.mask = build_overly_mask(batch_mean_confidence(t.confidence.per_dim.value()),
                               config.resolved_t1(classes), config.t2);
  } else {
    t.mask = OverlyMask::ones(latent, classes);
  }

  t.masked_centers = apply_mask(centers, t.mask);
  t.logits = diff::matmul(t.samples, t.masked_centers);
  t.l_ce = cross_entropy_from_logits(t.logits, labels);
  t.l_conf = confidence_loss(t.confidence.per_class, labels, config.reduction);
  switch (config.norm_variant) {
    case NormVariant::kl: t.l_norm = kl_regularizer(t.embedding.mu, t.embedding.sigma); break;
    case NormVariant::l2: t.l_norm = l2_regularizer(t.embedding.sigma); break;
    case NormVariant::none: t.l_norm = diff::scalar(tape, 0.0); break;
  }

  t.total = compose_total(t.l_ce, t.l_norm, t.l_conf, lambda1, lambda2);
  t.breakdown = total_loss(t.l_ce.value().item(), t.l_norm.value().item(), t.l_conf.value().item(), lambda1,
                           lambda2, config.norm_variant);
  return t;
}

}  // namespace cpe
