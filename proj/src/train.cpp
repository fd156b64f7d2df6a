#include "fiberinfer/train.hpp"

#include <chrono>
#include <memory>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace fiberinfer {

void AdamOptimizer::step(VectorXd& params, const VectorXd& grad, double lr) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -=
      lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void write_train_log(const std::string& path, const std::vector<TrainLogEntry>& log) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  out << "iteration,loss\n";
  char buf[96];
  for (const TrainLogEntry& e : log) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g\n",
                  static_cast<long long>(e.iteration), e.loss);
    out << buf;
  }
  std::string timing_path = path;
  const std::size_t dot = timing_path.rfind('.');
  timing_path.insert(dot == std::string::npos ? timing_path.size() : dot, "_timing");
  std::ofstream tout(timing_path);
  tout << "iteration,wall_ms\n";
  for (const TrainLogEntry& e : log) {
    std::snprintf(buf, sizeof(buf), "%lld,%.3f\n",
                  static_cast<long long>(e.iteration), e.wall_ms);
    tout << buf;
  }
}

VectorXd target_density_on_mesh(const FiberConfig& cfg, double kappa,
                                const SphericalMesh& mesh) {
  const int v_count = mesh.vertex_count();
  VectorXd g = VectorXd::Zero(v_count);
  const double log_peak = watson_log_peak(kappa);
  for (int i = 0; i < cfg.n; ++i) {
    const Vector3d& m = cfg.orientations[i];
    for (int v = 0; v < v_count; ++v) {
      const double c = m.dot(mesh.vertices()[v]);
      g[v] += std::exp(log_peak + kappa * (c * c - 1.0));
    }
  }
  g /= static_cast<double>(cfg.n);
  const double mass = mesh.weights().dot(g);
  if (!(mass > 0.0)) throw NumericError("target_density_on_mesh: zero mass");
  return g / mass;
}

InverterSampleSource algorithm_s2_source(const AcquisitionScheme& scheme,
                                         const InverterTrainConfig& cfg) {
  // Shared immutable pieces, built once.
  struct Shared {
    const AcquisitionScheme* scheme;
    std::vector<int> shell_idx;
    ShBasis basis;
    FitOperator fit_op;
    const SphericalMesh* mesh;
    InverterTrainConfig cfg;
    Shared(const AcquisitionScheme& s, const InverterTrainConfig& c)
        : scheme(&s), shell_idx(s.diffusion_shell_indices()), basis(c.fit_degree),
          fit_op(s, shell_idx, basis, c.fit_lambda),
          mesh(&SphericalMesh::icosphere(c.train_mesh_level)), cfg(c) {}
  };
  auto shared = std::make_shared<Shared>(scheme, cfg);
  return [shared](std::uint64_t seed, std::int64_t index) {
    RandomStream rng(derive_seed(seed, "s2-cfg", static_cast<std::uint64_t>(index)));
    const double u = rng.uniform();
    const auto& nd = shared->cfg.n_dist;
    const double total = nd[0] + nd[1] + nd[2];
    int n = 3;
    if (u * total < nd[0])
      n = 1;
    else if (u * total < nd[0] + nd[1])
      n = 2;
    const FiberConfig config = sample_config(n, rng);
    const SignalSet clean = forward_signal(config, *shared->scheme);
    const SignalSet noisy =
        add_noise(clean, shared->cfg.sigma_e,
                  derive_seed(seed, "s2-noise", static_cast<std::uint64_t>(index)));
    InverterSample sample;
    sample.coeffs = shared->fit_op.apply(noisy).coeffs;
    sample.target = target_density_on_mesh(config, shared->cfg.target_kappa, *shared->mesh);
    return sample;
  };
}

namespace {

struct ChunkResult {
  double loss_sum = 0.0;
  VectorXd grad;
};

}  // namespace

InverterTrainResult train_inverter(SpectralEquivariantNet net,
                                   const InverterTrainConfig& cfg,
                                   const InverterSampleSource& source,
                                   AdamOptimizer* external_opt) {
  const int threads = cfg.threads > 0 ? cfg.threads : default_thread_count();
  const SphericalMesh& mesh = SphericalMesh::icosphere(cfg.train_mesh_level);
  const MeshBasisOps& out_ops = mesh_basis_ops(mesh, net.config().output_degree);
  const int channels = net.config().input_channels;
  const int k_in = net.input_dimension();

  AdamOptimizer local_opt(net.params().size());
  AdamOptimizer& opt = external_opt ? *external_opt : local_opt;

  InverterTrainResult result{std::move(net), {}, false, -1};
  SpectralEquivariantNet& model = result.net;

  // Index-based chunking keeps gradients independent of the thread schedule.
  const int n_chunks = std::max(1, std::min<int>(threads, cfg.batch_size));
  std::vector<std::int64_t> chunk_begin(n_chunks + 1);
  for (int c = 0; c <= n_chunks; ++c)
    chunk_begin[c] = cfg.batch_size * static_cast<std::int64_t>(c) / n_chunks;

  const auto t_start = std::chrono::steady_clock::now();
  VectorXd last_good = model.params();
  std::int64_t last_good_iter = cfg.resume_iteration;

  for (std::int64_t iter = cfg.resume_iteration; iter < cfg.iterations; ++iter) {
    // Simulate the batch (parallel across samples, stored per slot).
    std::vector<InverterSample> batch(cfg.batch_size);
    parallel_for(cfg.batch_size, threads, [&](std::int64_t s) {
      batch[s] = source(cfg.seed, iter * cfg.batch_size + s);
    });

    std::vector<ChunkResult> chunks(n_chunks);
    parallel_for(n_chunks, threads, [&](std::int64_t c) {
      const std::int64_t b0 = chunk_begin[c], b1 = chunk_begin[c + 1];
      const std::int64_t rows = b1 - b0;
      if (rows <= 0) {
        chunks[c].grad = VectorXd::Zero(model.params().size());
        return;
      }
      std::vector<MatrixXd> input(channels, MatrixXd(rows, k_in));
      for (std::int64_t s = 0; s < rows; ++s)
        for (int ch = 0; ch < channels; ++ch)
          input[ch].row(s) = batch[b0 + s].coeffs[ch].transpose();
      SpectralEquivariantNet::Tape tape;
      const MatrixXd out = model.forward(input, tape);
      const MatrixXd pred = out * out_ops.synthesis.transpose();  // rows x V
      MatrixXd d_pred(pred.rows(), pred.cols());
      double loss_sum = 0.0;
      const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
      for (std::int64_t s = 0; s < rows; ++s) {
        const VectorXd diff = pred.row(s).transpose() - batch[b0 + s].target;
        loss_sum += mesh.weights().dot(diff.cwiseAbs2());
        d_pred.row(s) =
            (2.0 * inv_batch) * diff.cwiseProduct(mesh.weights()).transpose();
      }
      const MatrixXd d_out = d_pred * out_ops.synthesis;
      chunks[c].loss_sum = loss_sum;
      chunks[c].grad = model.backward(tape, d_out);
    });

    double loss = 0.0;
    VectorXd grad = VectorXd::Zero(model.params().size());
    for (const ChunkResult& c : chunks) {
      loss += c.loss_sum;
      grad += c.grad;
    }
    loss /= static_cast<double>(cfg.batch_size);

    if (!std::isfinite(loss) || !grad.allFinite()) {
      // Divergence: stop and hand back the last finite state.
      model.params() = last_good;
      result.diverged = true;
      if (!cfg.checkpoint_path.empty())
        model.save_checkpoint(cfg.checkpoint_path, last_good_iter, cfg.seed,
                              opt.moment1(), opt.moment2());
      break;
    }
    last_good = model.params();
    last_good_iter = iter + 1;

    opt.step(model.params(), grad, cfg.lr);

    if (iter % cfg.log_every == 0 || iter + 1 == cfg.iterations) {
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t_start)
                            .count();
      result.log.push_back({iter, loss, ms});
    }
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        (iter + 1) % cfg.checkpoint_every == 0) {
      model.save_checkpoint(cfg.checkpoint_path, iter + 1, cfg.seed, opt.moment1(),
                            opt.moment2());
      result.last_checkpoint_iteration = iter + 1;
    }
  }
  if (!cfg.checkpoint_path.empty() && !result.diverged) {
    model.save_checkpoint(cfg.checkpoint_path, cfg.iterations, cfg.seed,
                          opt.moment1(), opt.moment2());
    result.last_checkpoint_iteration = cfg.iterations;
  }
  return result;
}

}  // namespace fiberinfer
