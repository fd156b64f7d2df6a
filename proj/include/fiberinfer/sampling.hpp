#pragma once

#include <array>
#include <cstdint>

#include "fiberinfer/forward_model.hpp"
#include "fiberinfer/rng.hpp"

namespace fiberinfer {

/// Biologically constrained prior over voxel configurations.
///
/// z-weights: symmetric Dirichlet over the 2n compartment weights with a
/// rejection floor on every component (uniform on the shrunk simplex for
/// alpha = 1). Diffusivities: d_a and d_e_par uniform on [0.2, 3.0] with
/// exactly uniform marginals; d_e_perp box-uniform on [0.2, 0.8 d_e_par].
/// Orientations: uniform on the upper hemisphere with crossing-angle
/// rejection (min pairwise >= 10 deg; for n = 3 the second smallest >= 30 deg).
struct PriorConfig {
  double dirichlet_alpha = 1.0;
  double z_floor = 0.1;

  enum class KappaMode { kInfinite, kFixed, kUniform };
  KappaMode kappa_mode = KappaMode::kInfinite;
  double kappa_fixed = 30.0;
  double kappa_lo = 5.0;
  double kappa_hi = 35.0;
};

inline constexpr std::int64_t kSamplingIterationCap = 1000000;

/// Draws one FiberConfig from the constrained prior. Throws NumericError if
/// the rejection loop exceeds kSamplingIterationCap proposals.
FiberConfig sample_config(int n, std::uint64_t rng_seed,
                          const PriorConfig& prior = {});
FiberConfig sample_config(int n, RandomStream& rng, const PriorConfig& prior = {});

/// One synthetic record: ground truth plus the noisy signals.
struct DatasetRecord {
  FiberConfig config;
  SignalSet signals;        // noisy
  SignalSet clean_signals;  // noiseless (kept for oracles and diagnostics)
};

/// Fiber-count distribution as probabilities for n = 1, 2, 3.
using NDistribution = std::array<double, 3>;
inline constexpr NDistribution kUniformN = {1.0 / 3, 1.0 / 3, 1.0 / 3};
NDistribution point_mass_n(int n);

/// Draws record `index` of the stream rooted at `seed`. Records are i.i.d.
/// and each is reproducible from (seed, index) alone, so generation
/// parallelizes across indices.
DatasetRecord make_dataset_record(const AcquisitionScheme& scheme, double sigma_e,
                                  const NDistribution& n_dist, std::uint64_t seed,
                                  std::int64_t index, const PriorConfig& prior = {},
                                  int watson_quadrature_order = 48);

/// Materializes records [0, count) in index order (parallel internally).
std::vector<DatasetRecord> generate_dataset(const AcquisitionScheme& scheme,
                                            std::int64_t count, double sigma_e,
                                            const NDistribution& n_dist,
                                            std::uint64_t seed,
                                            const PriorConfig& prior = {},
                                            int threads = 1);

/// Monte-Carlo mean of the constrained prior (10^7 draws, cached per n and
/// prior). The trivial baseline estimator returns this for every voxel.
const KernelParams& prior_mean_kernel(int n, const PriorConfig& prior = {});

}  // namespace fiberinfer
