#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "idm/tensor.hpp"

namespace idm {

// splitmix64 finalizer; used to spread user-facing seeds and stream ids over
// the full 64-bit space before feeding mt19937_64.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic random source. Every consumer gets its own Rng derived from a
// root seed via split(), so adding a draw in one place never shifts the
// stream seen by another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  // Child stream: deterministic function of (seed, stream id), independent of
  // how much this Rng has already been consumed.
  Rng split(std::uint64_t stream) const {
    return Rng(mix64(seed_ ^ mix64(stream + 0x632be59bd9b4e019ULL)));
  }

  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  // Uniform integer in [lo, hi] inclusive.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
  }

  double gaussian() {
    return std::normal_distribution<double>(0.0, 1.0)(engine_);
  }

  Tensor gaussian_tensor(Shape shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = gaussian();
    return t;
  }

  void fill_gaussian(Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = gaussian();
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace idm
