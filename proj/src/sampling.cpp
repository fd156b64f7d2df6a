#include "fiberinfer/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace fiberinfer {

namespace {

constexpr double kMinCrossingDeg = 10.0;
constexpr double kSecondCrossingDeg = 30.0;

struct ProposalBudget {
  std::int64_t used = 0;
  void spend(std::int64_t k = 1) {
    used += k;
    if (used > kSamplingIterationCap)
      throw NumericError("sample_config: rejection sampling exceeded iteration cap");
  }
};

// Compartment weights: symmetric Dirichlet(alpha) over 2n components via
// normalized Gamma draws, rejecting when any component falls below the floor.
std::vector<double> sample_z(int n, RandomStream& rng, const PriorConfig& prior,
                             ProposalBudget& budget) {
  const int dim = 2 * n;
  std::vector<double> z(dim);
  for (;;) {
    budget.spend();
    double sum = 0.0;
    for (double& v : z) {
      v = rng.gamma(prior.dirichlet_alpha);
      sum += v;
    }
    bool ok = sum > 0.0;
    for (double& v : z) {
      v /= sum;
      ok = ok && v >= prior.z_floor;
    }
    if (ok) return z;
  }
}

Vector3d sample_hemisphere(RandomStream& rng) {
  return hemisphere_canonical(rng.unit_vector());
}

std::vector<Vector3d> sample_orientations(int n, RandomStream& rng,
                                          ProposalBudget& budget) {
  std::vector<Vector3d> m(n);
  for (;;) {
    budget.spend();
    for (Vector3d& v : m) v = sample_hemisphere(rng);
    if (n == 1) return m;
    std::vector<double> angles;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double c = std::min(1.0, std::abs(m[i].dot(m[j])));
        angles.push_back(std::acos(c) * 180.0 / kPi);
      }
    std::sort(angles.begin(), angles.end());
    if (angles[0] < kMinCrossingDeg) continue;
    if (n == 3 && angles[1] < kSecondCrossingDeg) continue;
    return m;
  }
}

void sample_diffusivities(RandomStream& rng, ProposalBudget& budget,
                          KernelParams& k) {
  const ParamSupport& box = param_support(0);
  for (;;) {
    budget.spend();
    k.d_a = rng.uniform(box.lo, box.hi);
    k.d_e_par = rng.uniform(box.lo, box.hi);
    const double perp_hi = 0.8 * k.d_e_par;
    if (perp_hi <= box.lo) continue;  // no room for d_e_perp; redraw the triple
    // Box-uniform proposal on [0.2, 2.4] conditioned on the polytope row
    // d_e_perp <= 0.8 d_e_par, drawn in closed form.
    k.d_e_perp = rng.uniform(box.lo, perp_hi);
    return;
  }
}

}  // namespace

NDistribution point_mass_n(int n) {
  NDistribution d = {0, 0, 0};
  d[n - 1] = 1.0;
  return d;
}

FiberConfig sample_config(int n, RandomStream& rng, const PriorConfig& prior) {
  if (n < 1 || n > 3) throw InvalidInput("sample_config: n must be in {1,2,3}");
  ProposalBudget budget;
  FiberConfig cfg;
  cfg.n = n;
  const std::vector<double> z = sample_z(n, rng, prior, budget);
  cfg.kernels.resize(n);
  for (int i = 0; i < n; ++i) {
    sample_diffusivities(rng, budget, cfg.kernels[i]);
    cfg.kernels[i].z1 = z[2 * i];
    cfg.kernels[i].z2 = z[2 * i + 1];
  }
  cfg.orientations = sample_orientations(n, rng, budget);
  switch (prior.kappa_mode) {
    case PriorConfig::KappaMode::kInfinite:
      break;
    case PriorConfig::KappaMode::kFixed:
      cfg.kappa.assign(n, prior.kappa_fixed);
      break;
    case PriorConfig::KappaMode::kUniform:
      cfg.kappa.resize(n);
      for (double& k : cfg.kappa) k = rng.uniform(prior.kappa_lo, prior.kappa_hi);
      break;
  }
  cfg.validate();
  return cfg;
}

FiberConfig sample_config(int n, std::uint64_t rng_seed, const PriorConfig& prior) {
  RandomStream rng(rng_seed);
  return sample_config(n, rng, prior);
}

DatasetRecord make_dataset_record(const AcquisitionScheme& scheme, double sigma_e,
                                  const NDistribution& n_dist, std::uint64_t seed,
                                  std::int64_t index, const PriorConfig& prior,
                                  int watson_quadrature_order) {
  RandomStream rng(derive_seed(seed, "record", static_cast<std::uint64_t>(index)));
  const double u = rng.uniform();
  const double total = n_dist[0] + n_dist[1] + n_dist[2];
  if (!(total > 0.0)) throw InvalidInput("n distribution has zero mass");
  int n = 3;
  if (u * total < n_dist[0])
    n = 1;
  else if (u * total < n_dist[0] + n_dist[1])
    n = 2;
  DatasetRecord rec;
  rec.config = sample_config(n, rng, prior);
  rec.clean_signals =
      rec.config.kappa.empty()
          ? forward_signal(rec.config, scheme)
          : forward_signal_watson(rec.config, scheme, watson_quadrature_order);
  rec.signals = add_noise(rec.clean_signals, sigma_e,
                          derive_seed(seed, "noise", static_cast<std::uint64_t>(index)));
  return rec;
}

std::vector<DatasetRecord> generate_dataset(const AcquisitionScheme& scheme,
                                            std::int64_t count, double sigma_e,
                                            const NDistribution& n_dist,
                                            std::uint64_t seed,
                                            const PriorConfig& prior, int threads) {
  if (count < 0) throw InvalidInput("generate_dataset: negative count");
  std::vector<DatasetRecord> records(count);
  parallel_for(count, threads, [&](std::int64_t i) {
    records[i] = make_dataset_record(scheme, sigma_e, n_dist, seed, i, prior);
  });
  return records;
}

const KernelParams& prior_mean_kernel(int n, const PriorConfig& prior) {
  static std::mutex mu;
  static std::map<std::tuple<int, double, double>, KernelParams> cache;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_tuple(n, prior.dirichlet_alpha, prior.z_floor);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  constexpr std::int64_t kDraws = 10000000;
  RandomStream rng(derive_seed(0x9d5af3c1u, "prior-mean", static_cast<std::uint64_t>(n)));
  PriorConfig p = prior;
  p.kappa_mode = PriorConfig::KappaMode::kInfinite;
  double acc[kParamCount] = {0, 0, 0, 0, 0};
  for (std::int64_t d = 0; d < kDraws; ++d) {
    const FiberConfig cfg = sample_config(n, rng, p);
    for (int i = 0; i < n; ++i) {
      acc[0] += cfg.kernels[i].d_a;
      acc[1] += cfg.kernels[i].d_e_par;
      acc[2] += cfg.kernels[i].d_e_perp;
      acc[3] += cfg.kernels[i].z1;
      acc[4] += cfg.kernels[i].z2;
    }
  }
  const double denom = static_cast<double>(kDraws) * n;
  KernelParams mean;
  mean.d_a = acc[0] / denom;
  mean.d_e_par = acc[1] / denom;
  mean.d_e_perp = acc[2] / denom;
  mean.z1 = acc[3] / denom;
  mean.z2 = acc[4] / denom;
  return cache.emplace(key, mean).first->second;
}

}  // namespace fiberinfer
