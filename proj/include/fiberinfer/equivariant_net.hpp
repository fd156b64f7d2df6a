#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fiberinfer/sphere_mesh.hpp"

namespace fiberinfer {

/// Architecture of the spectral inverse operator. Linear layers are zonal:
/// one scalar weight per (even degree, output channel, input channel), acting
/// multiplicatively on spherical-harmonic coefficient blocks, plus a bias on
/// the degree-0 coefficient. These commute with rotations exactly. Pointwise
/// softplus nonlinearities are applied on a small icosphere (synthesis ->
/// softplus -> quadrature least-squares analysis); the last stage re-projects
/// to the higher output degree.
struct InverterConfig {
  int input_channels = 2;  // one per diffusion shell
  int internal_degree = 8;
  int output_degree = 20;
  std::vector<int> hidden_widths = {16, 32, 32, 16, 8};
  int stage_mesh_level = 3;  // 642-vertex icosphere for the pointwise stages
  bool nonlinearity_enabled = true;

  int layer_count() const { return static_cast<int>(hidden_widths.size()) + 1; }
};

class SpectralEquivariantNet {
 public:
  SpectralEquivariantNet(const InverterConfig& cfg, std::uint64_t init_seed);

  const InverterConfig& config() const { return cfg_; }
  int input_dimension() const;   // K(internal_degree)
  int output_dimension() const;  // K(output_degree)

  VectorXd& params() { return params_; }
  const VectorXd& params() const { return params_; }

  /// Batch forward. input[c] is batch x K_in for channel c; the result is
  /// batch x K_out (output-degree coefficients).
  MatrixXd forward(const std::vector<MatrixXd>& input) const;

  /// Forward keeping the activations needed for the backward pass.
  struct Tape {
    std::vector<std::vector<MatrixXd>> layer_inputs;  // per layer, per channel
    std::vector<std::vector<MatrixXd>> stage_pre;     // mesh pre-activations
  };
  MatrixXd forward(const std::vector<MatrixXd>& input, Tape& tape) const;

  /// Accumulates dLoss/dparams given dLoss/d(output coefficients).
  VectorXd backward(const Tape& tape, const MatrixXd& grad_output) const;

  /// Single-voxel convenience wrapper around the batch forward.
  VectorXd apply_coeffs(const std::vector<VectorXd>& channel_coeffs) const;

  void save_checkpoint(const std::string& path, std::int64_t iteration,
                       std::uint64_t seed, const VectorXd& adam_m,
                       const VectorXd& adam_v) const;

 private:
  struct LayerSpec {
    int in_channels, out_channels;
    int degree;       // degree of the coefficient space the layer acts on
    int param_offset; // into params_
  };
  const MeshBasisOps& stage_ops(int degree) const;
  void apply_zonal(const LayerSpec& layer, const std::vector<MatrixXd>& in,
                   std::vector<MatrixXd>& out) const;

  InverterConfig cfg_;
  std::vector<LayerSpec> layers_;
  std::vector<int> degree_offsets_in_;   // column offset per degree block (internal)
  std::vector<int> degree_offsets_out_;  // for the output degree
  VectorXd params_;
};

struct InverterCheckpoint {
  SpectralEquivariantNet net;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;
  VectorXd adam_m, adam_v;
};
InverterCheckpoint load_inverter_checkpoint(const std::string& path);

/// Applies the trained inverse operator to a fitted signal sampled on the
/// inference mesh (one row per shell). Output is finite and antipodally
/// symmetric by construction (even-degree pipeline).
OdfField apply_inverter(const SpectralEquivariantNet& net,
                        const MatrixXd& fitted_mesh_values,
                        const SphericalMesh& mesh);

/// Quadrature-weighted empirical Bayes risk: mean over the batch of
/// sum_v w_v (g_v - A(f)_v)^2 on the given mesh.
double bayes_risk_loss(const SpectralEquivariantNet& net,
                       const std::vector<std::vector<VectorXd>>& batch_inputs,
                       const std::vector<VectorXd>& batch_targets,
                       const SphericalMesh& mesh);

}  // namespace fiberinfer
