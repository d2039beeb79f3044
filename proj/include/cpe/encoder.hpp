#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cpe/diff/fdcheck.hpp"
#include "cpe/diff/ops.hpp"
#include "cpe/random.hpp"

namespace cpe {

using diff::Tensor;
using diff::Var;

/// Floor applied to sigma after exp(0.5 * logvar).
inline constexpr double kSigmaFloor = 1e-6;

struct EncoderShape {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 64;
  std::size_t latent_dim = 16;
};

/// Shared tanh trunk (F -> H) feeding two separate heads (H -> D): one for
/// the latent mean, one for log-variance.
struct EncoderParams {
  Tensor trunk_weight;   // F x H
  Tensor trunk_bias;     // H
  Tensor mean_weight;    // H x D
  Tensor mean_bias;      // D
  Tensor logvar_weight;  // H x D
  Tensor logvar_bias;    // D

  EncoderShape shape() const;
  std::vector<diff::NamedTensor> named() const;
  static EncoderParams from_named(const std::vector<diff::NamedTensor>& tensors);
};

/// Xavier-uniform weights, zero biases. Zero logvar bias puts the initial
/// sigma near 1.
EncoderParams init_encoder(const EncoderShape& shape, std::uint64_t seed);

struct EncoderVars {
  Var trunk_weight;
  Var trunk_bias;
  Var mean_weight;
  Var mean_bias;
  Var logvar_weight;
  Var logvar_bias;

  std::vector<Var> all() const;
};

EncoderVars bind(diff::Tape& tape, const EncoderParams& params);
/// Rebinds from leaves in EncoderParams::named() order.
EncoderVars bind(std::span<const Var> leaves);

/// Batch of diagonal Gaussians, each field N x D.
struct EmbeddingVars {
  Var mu;
  Var sigma;
};

/// Differentiable batch encoding of an N x F feature matrix.
EmbeddingVars encode(const EncoderVars& vars, const Var& features);

struct GaussianEmbedding {
  Tensor mu;
  Tensor sigma;
};

/// Encodes a single feature vector of length F.
GaussianEmbedding encode(const EncoderParams& params, std::span<const double> x);
/// Non-differentiable batch encoding of an N x F matrix; fields are N x D.
GaussianEmbedding encode_batch(const EncoderParams& params, const Tensor& features);

struct LatentSample {
  Tensor s;
  Tensor eps;
};

/// s = mu + eps * sigma with eps ~ N(0, I) drawn from rng.
LatentSample sample(const GaussianEmbedding& emb, Rng& rng);

/// Differentiable reparameterization with a fixed noise tensor.
Var reparameterize(const Var& mu, const Var& sigma, const Tensor& eps);

}  // namespace cpe
