#pragma once

#include <cstdint>
#include <random>

#include "cpe/diff/tensor.hpp"

namespace cpe {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream); streams separate parameter
/// init, shuffling and reparameterization noise within one run.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

enum RngStream : std::uint64_t {
  kInitStream = 1,
  kShuffleStream = 2,
  kNoiseStream = 3,
  kDataStream = 4,
};

diff::Tensor standard_normal(Shape shape, Rng& rng);
diff::Tensor uniform(Shape shape, double low, double high, Rng& rng);

}  // namespace cpe
