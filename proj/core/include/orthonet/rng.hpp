#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "orthonet/tensor.hpp"

namespace orthonet {

/// Seeded random source.
///
/// The bit stream is std::mt19937_64 (its output sequence is fixed by the C++
/// standard). Derived quantities are computed here rather than through
/// <random> distributions, whose algorithms vary between standard libraries:
///   uniform()   = (next_u64() >> 11) * 2^-53
///   normal()    = Marsaglia polar method on 2*uniform()-1 pairs, spare cached
///   index(n)    = rejection sampling on next_u64() below the largest multiple of n
///   derive(s)   = Rng(splitmix64(seed ^ splitmix64(s)))
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double normal();
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent stream keyed by `stream`; the parent is left untouched.
  Rng derive(std::uint64_t stream) const;

  /// Fisher-Yates permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// i.i.d. normal samples. Throws DomainError for std < 0.
Tensor gaussian(Rng& rng, const Shape& shape, double mean, double std);

}  // namespace orthonet
