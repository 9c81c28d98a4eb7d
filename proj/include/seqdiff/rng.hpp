#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "seqdiff/field.hpp"

namespace seqdiff {

/// Seeded random stream. Every stochastic operation in the library draws
/// from an explicitly passed Rng so results depend only on seeds.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  /// Uniform on [0, 1).
  double uniform() { return std::generate_canonical<double, 53>(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  std::uint64_t next_u64() { return engine_(); }

  Field normal_field(std::size_t height, std::size_t width);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Mixes a master seed with stream identifiers (splitmix64 finalizer) so
/// that (master, sequence, frame, ...) tuples map to independent streams.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> ids);

}  // namespace seqdiff
