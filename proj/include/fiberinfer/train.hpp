#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fiberinfer/equivariant_net.hpp"
#include "fiberinfer/sampling.hpp"
#include "fiberinfer/sh_basis.hpp"

namespace fiberinfer {

/// Adaptive-moment optimizer over a packed parameter vector.
class AdamOptimizer {
 public:
  AdamOptimizer(Eigen::Index n, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)), beta1_(beta1), beta2_(beta2),
        eps_(eps) {}

  void step(VectorXd& params, const VectorXd& grad, double lr);
  std::int64_t iteration() const { return t_; }
  VectorXd& moment1() { return m_; }
  VectorXd& moment2() { return v_; }
  void restore(const VectorXd& m, const VectorXd& v, std::int64_t t) {
    m_ = m;
    v_ = v;
    t_ = t;
  }

 private:
  VectorXd m_, v_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

struct TrainLogEntry {
  std::int64_t iteration = 0;
  double loss = 0.0;
  double wall_ms = 0.0;  // written to the timing sidecar, never compared
};

/// Writes (iteration, loss) to `path` and (iteration, wall_ms) to
/// `path` with a "_timing" suffix before the extension.
void write_train_log(const std::string& path, const std::vector<TrainLogEntry>& log);

struct InverterTrainConfig {
  std::int64_t iterations = 20000;
  int batch_size = 256;
  double lr = 1e-4;
  double sigma_e = 0.0620;
  double target_kappa = 100.0;
  int fit_degree = 8;
  double fit_lambda = 1e-3;
  int train_mesh_level = 4;  // 2562-vertex loss mesh
  NDistribution n_dist = kUniformN;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 -> hardware count
  std::int64_t checkpoint_every = 5000;
  std::string checkpoint_path;  // empty -> no checkpointing
  std::int64_t log_every = 50;
  std::int64_t resume_iteration = 0;  // continue from a restored state
};

struct InverterTrainResult {
  SpectralEquivariantNet net;
  std::vector<TrainLogEntry> log;
  bool diverged = false;
  std::int64_t last_checkpoint_iteration = -1;
};

/// One training sample for the orientation inverter: per-shell fitted
/// coefficients (the net input) and the target density on the training mesh.
struct InverterSample {
  std::vector<VectorXd> coeffs;
  VectorXd target;
};

using InverterSampleSource =
    std::function<InverterSample(std::uint64_t seed, std::int64_t index)>;

/// The default on-the-fly simulate -> fit -> target chain: draws a config
/// from the prior, simulates noisy signals on the scheme, ridge-fits per
/// shell, and evaluates the fiber-mixture target density (concentration
/// target_kappa, renormalized to quadrature integral 1) on the mesh.
InverterSampleSource algorithm_s2_source(const AcquisitionScheme& scheme,
                                         const InverterTrainConfig& cfg);

/// Minimizes the empirical Bayes risk with Adam. Deterministic for a fixed
/// (seed, thread count). Aborts with the last finite state if the loss turns
/// non-finite.
InverterTrainResult train_inverter(SpectralEquivariantNet net,
                                   const InverterTrainConfig& cfg,
                                   const InverterSampleSource& source,
                                   AdamOptimizer* optimizer = nullptr);

/// Watson-mixture target on a mesh, normalized to quadrature integral 1.
VectorXd target_density_on_mesh(const FiberConfig& cfg, double kappa,
                                const SphericalMesh& mesh);

}  // namespace fiberinfer
