#include "cpe/encoder.hpp"

#include <cmath>
#include <map>

#include <fmt/format.h>

namespace cpe {
namespace {

constexpr const char* kTensorNames[] = {"trunk_weight", "trunk_bias",    "mean_weight",
                                        "mean_bias",    "logvar_weight", "logvar_bias"};

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform({fan_in, fan_out}, -a, a, rng);
}

Var affine(const Var& x, const Var& weight, const Var& bias) {
  const Var xw = diff::matmul(x, weight);
  return xw + diff::expand(bias, 0, xw.shape()[0]);
}

}  // namespace

EncoderShape EncoderParams::shape() const {
  return {trunk_weight.dim(0), trunk_weight.dim(1), mean_weight.dim(1)};
}

std::vector<diff::NamedTensor> EncoderParams::named() const {
  return {{kTensorNames[0], trunk_weight}, {kTensorNames[1], trunk_bias},    {kTensorNames[2], mean_weight},
          {kTensorNames[3], mean_bias},    {kTensorNames[4], logvar_weight}, {kTensorNames[5], logvar_bias}};
}

EncoderParams EncoderParams::from_named(const std::vector<diff::NamedTensor>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.value;
  auto get = [&](const char* name) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError(fmt::format("encoder: missing tensor '{}'", name));
    return *it->second;
  };
  EncoderParams p{get(kTensorNames[0]), get(kTensorNames[1]), get(kTensorNames[2]),
                  get(kTensorNames[3]), get(kTensorNames[4]), get(kTensorNames[5])};
  const auto [f, h, d] = p.shape();
  const bool consistent = p.trunk_weight.rank() == 2 && p.trunk_bias.shape() == Shape{h} &&
                          p.mean_weight.shape() == Shape{h, d} && p.mean_bias.shape() == Shape{d} &&
                          p.logvar_weight.shape() == Shape{h, d} && p.logvar_bias.shape() == Shape{d};
  if (!consistent || f == 0) throw InputError("encoder: inconsistent tensor shapes");
  return p;
}

EncoderParams init_encoder(const EncoderShape& shape, std::uint64_t seed) {
  if (shape.input_dim == 0 || shape.hidden_dim == 0 || shape.latent_dim == 0) {
    throw InputError(fmt::format("init_encoder: dimensions must be >= 1 (F={}, H={}, D={})", shape.input_dim,
                                 shape.hidden_dim, shape.latent_dim));
  }
  Rng rng = make_rng(seed, kInitStream);
  EncoderParams p;
  p.trunk_weight = xavier(shape.input_dim, shape.hidden_dim, rng);
  p.trunk_bias = Tensor::zeros({shape.hidden_dim});
  p.mean_weight = xavier(shape.hidden_dim, shape.latent_dim, rng);
  p.mean_bias = Tensor::zeros({shape.latent_dim});
  p.logvar_weight = xavier(shape.hidden_dim, shape.latent_dim, rng);
  p.logvar_bias = Tensor::zeros({shape.latent_dim});
  return p;
}

std::vector<Var> EncoderVars::all() const {
  return {trunk_weight, trunk_bias, mean_weight, mean_bias, logvar_weight, logvar_bias};
}

EncoderVars bind(diff::Tape& tape, const EncoderParams& params) {
  return {tape.leaf(params.trunk_weight), tape.leaf(params.trunk_bias),    tape.leaf(params.mean_weight),
          tape.leaf(params.mean_bias),    tape.leaf(params.logvar_weight), tape.leaf(params.logvar_bias)};
}

EncoderVars bind(std::span<const Var> leaves) {
  if (leaves.size() < 6) throw std::logic_error("bind: expected six encoder leaves");
  return {leaves[0], leaves[1], leaves[2], leaves[3], leaves[4], leaves[5]};
}

EmbeddingVars encode(const EncoderVars& vars, const Var& features) {
  const Shape& in = features.shape();
  const std::size_t width = vars.trunk_weight.shape()[0];
  if (in.size() != 2 || in[1] != width) {
    throw ShapeError("encode", fmt::format("expected N x {} features, got {}", width, format_shape(in)));
  }
  const Var hidden = diff::tanh(affine(features, vars.trunk_weight, vars.trunk_bias));
  const Var mu = affine(hidden, vars.mean_weight, vars.mean_bias);
  const Var logvar = affine(hidden, vars.logvar_weight, vars.logvar_bias);
  const Var sigma = diff::clamp_min(diff::exp(logvar * 0.5), kSigmaFloor);
  return {mu, sigma};
}

GaussianEmbedding encode_batch(const EncoderParams& params, const Tensor& features) {
  diff::Tape tape;
  const EncoderVars vars = bind(tape, params);
  const EmbeddingVars emb = encode(vars, tape.constant(features));
  return {emb.mu.value(), emb.sigma.value()};
}

GaussianEmbedding encode(const EncoderParams& params, std::span<const double> x) {
  const std::size_t width = params.trunk_weight.dim(0);
  if (x.size() != width) {
    throw ShapeError("encode", fmt::format("expected {} input features, got {}", width, x.size()));
  }
  GaussianEmbedding batch = encode_batch(params, Tensor({1, width}, {x.begin(), x.end()}));
  const std::size_t d = batch.mu.size();
  return {Tensor({d}, batch.mu.values()), Tensor({d}, batch.sigma.values())};
}

LatentSample sample(const GaussianEmbedding& emb, Rng& rng) {
  if (emb.mu.shape() != emb.sigma.shape()) throw ShapeError("sample", emb.mu.shape(), emb.sigma.shape());
  LatentSample out{Tensor(emb.mu.shape()), standard_normal(emb.mu.shape(), rng)};
  for (std::size_t i = 0; i < out.s.size(); ++i) out.s[i] = emb.mu[i] + out.eps[i] * emb.sigma[i];
  return out;
}

Var reparameterize(const Var& mu, const Var& sigma, const Tensor& eps) {
  if (eps.shape() != mu.shape()) throw ShapeError("reparameterize", mu.shape(), eps.shape());
  return mu + mu.tape()->constant(eps) * sigma;
}

}  // namespace cpe
