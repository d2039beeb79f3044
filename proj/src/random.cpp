#include "cpe/random.hpp"

namespace cpe {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

diff::Tensor standard_normal(Shape shape, Rng& rng) {
  diff::Tensor out(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : out.data()) v = dist(rng);
  return out;
}

diff::Tensor uniform(Shape shape, double low, double high, Rng& rng) {
  diff::Tensor out(std::move(shape));
  std::uniform_real_distribution<double> dist(low, high);
  for (double& v : out.data()) v = dist(rng);
  return out;
}

}  // namespace cpe
