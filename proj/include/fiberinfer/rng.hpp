#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "fiberinfer/common.hpp"

namespace fiberinfer {

/// Deterministic seed derivation. All randomness in the toolkit flows from
/// one root seed through this tree: child streams are identified by a string
/// tag plus an integer index, so records, bootstrap replicates and training
/// batches are independently reproducible.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                          std::uint64_t index = 0);

/// Random stream with fully specified output transforms (the engine is
/// mt19937_64, which the standard pins down bit for bit; the distribution
/// code here is ours, so sequences are identical across compilers).
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  std::uint64_t bits() { return engine_(); }
  /// Integer uniform on [0, n) by rejection (unbiased).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (the spare value is cached).
  double normal();
  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  /// Gamma(alpha, 1) via Marsaglia-Tsang squeeze, boosted for alpha < 1.
  double gamma(double alpha);

  /// Uniform direction on the full sphere.
  Vector3d unit_vector();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fiberinfer
