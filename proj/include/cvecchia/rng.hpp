#ifndef CVECCHIA_RNG_HPP_
#define CVECCHIA_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "cvecchia/linalg.hpp"

namespace cvecchia {

/// SplitMix64 finalizer; used for seed derivation and pair hashing.
std::uint64_t splitmix64(std::uint64_t x);

/// Seedable generator with a fixed stream-splitting rule.
///
/// The engine is std::mt19937_64 (bit-identical across standard libraries).
/// `child(k)` seeds a fresh engine with splitmix64(seed ^ splitmix64(k + 1)),
/// so child streams are independent of how much the parent has been used.
/// Uniforms use the top 53 bits; normals use the Box-Muller transform,
/// consuming two uniforms per pair.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  Rng child(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  Vector normal_vector(std::size_t n);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Random permutation of 0..n-1.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

}  // namespace cvecchia

#endif  // CVECCHIA_RNG_HPP_
