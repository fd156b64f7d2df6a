#include "fiberinfer/equivariant_net.hpp"

#include <cmath>

#include <json.hpp>

#include "fiberinfer/container.hpp"
#include "fiberinfer/rng.hpp"

namespace fiberinfer {

namespace {

std::vector<int> degree_block_offsets(int max_degree) {
  // Column offset of each even-degree block plus a trailing total.
  std::vector<int> off;
  int k = 0;
  for (int l = 0; l <= max_degree; l += 2) {
    off.push_back(k);
    k += 2 * l + 1;
  }
  off.push_back(k);
  return off;
}

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

SpectralEquivariantNet::SpectralEquivariantNet(const InverterConfig& cfg,
                                               std::uint64_t init_seed)
    : cfg_(cfg) {
  if (cfg_.internal_degree % 2 != 0 || cfg_.output_degree % 2 != 0)
    throw InvalidInput("inverter: degrees must be even");
  degree_offsets_in_ = degree_block_offsets(cfg_.internal_degree);
  degree_offsets_out_ = degree_block_offsets(cfg_.output_degree);

  std::vector<int> widths;
  widths.push_back(cfg_.input_channels);
  for (int w : cfg_.hidden_widths) widths.push_back(w);
  widths.push_back(1);

  int offset = 0;
  for (std::size_t li = 0; li + 1 < widths.size(); ++li) {
    LayerSpec layer;
    layer.in_channels = widths[li];
    layer.out_channels = widths[li + 1];
    // Only the final zonal layer sees the output degree; everything before it
    // lives in the internal-degree space.
    layer.degree = (li + 2 == widths.size()) ? cfg_.output_degree : cfg_.internal_degree;
    layer.param_offset = offset;
    const int n_deg = layer.degree / 2 + 1;
    offset += layer.in_channels * layer.out_channels * n_deg + layer.out_channels;
    layers_.push_back(layer);
  }

  params_.resize(offset);
  RandomStream rng(init_seed);
  for (const LayerSpec& layer : layers_) {
    const int n_deg = layer.degree / 2 + 1;
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in_channels));
    int p = layer.param_offset;
    for (int i = 0; i < layer.in_channels * layer.out_channels * n_deg; ++i)
      params_[p++] = scale * rng.normal();
    for (int i = 0; i < layer.out_channels; ++i) params_[p++] = 0.0;
  }
}

int SpectralEquivariantNet::input_dimension() const {
  return ShBasis::dimension_for(cfg_.internal_degree);
}
int SpectralEquivariantNet::output_dimension() const {
  return ShBasis::dimension_for(cfg_.output_degree);
}

const MeshBasisOps& SpectralEquivariantNet::stage_ops(int degree) const {
  return mesh_basis_ops(SphericalMesh::icosphere(cfg_.stage_mesh_level), degree);
}

void SpectralEquivariantNet::apply_zonal(const LayerSpec& layer,
                                         const std::vector<MatrixXd>& in,
                                         std::vector<MatrixXd>& out) const {
  const std::vector<int>& off =
      layer.degree == cfg_.output_degree ? degree_offsets_out_ : degree_offsets_in_;
  const int n_deg = layer.degree / 2 + 1;
  const Eigen::Index batch = in[0].rows();
  const int dim = off.back();
  out.assign(layer.out_channels, MatrixXd::Zero(batch, dim));
  const double* w = params_.data() + layer.param_offset;
  for (int d = 0; d < n_deg; ++d) {
    const int c0 = off[d], width = off[d + 1] - off[d];
    for (int co = 0; co < layer.out_channels; ++co)
      for (int ci = 0; ci < layer.in_channels; ++ci) {
        const double wv = w[(d * layer.out_channels + co) * layer.in_channels + ci];
        out[co].middleCols(c0, width).noalias() += wv * in[ci].middleCols(c0, width);
      }
  }
  const double* b = w + n_deg * layer.out_channels * layer.in_channels;
  for (int co = 0; co < layer.out_channels; ++co)
    out[co].col(0).array() += b[co];
}

MatrixXd SpectralEquivariantNet::forward(const std::vector<MatrixXd>& input,
                                         Tape& tape) const {
  if (static_cast<int>(input.size()) != cfg_.input_channels)
    throw InvalidInput("inverter forward: channel count mismatch");
  for (const MatrixXd& ch : input)
    if (ch.cols() != input_dimension())
      throw InvalidInput("inverter forward: coefficient dimension mismatch");

  const MeshBasisOps& ops_int = stage_ops(cfg_.internal_degree);
  const MeshBasisOps& ops_out = stage_ops(cfg_.output_degree);

  tape.layer_inputs.clear();
  tape.stage_pre.clear();
  std::vector<MatrixXd> act = input;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    tape.layer_inputs.push_back(act);
    std::vector<MatrixXd> next;
    apply_zonal(layers_[li], act, next);
    act = std::move(next);
    if (li + 1 == layers_.size()) break;
    // Pointwise stage between zonal layers. The stage before the final layer
    // re-projects to the output degree.
    const bool last_stage = (li + 2 == layers_.size());
    const MeshBasisOps& ops = last_stage ? ops_out : ops_int;
    std::vector<MatrixXd> pre(act.size());
    for (std::size_t c = 0; c < act.size(); ++c) {
      pre[c].noalias() = act[c] * ops_int.synthesis.transpose();
      MatrixXd z;
      if (cfg_.nonlinearity_enabled)
        z = pre[c].unaryExpr([](double x) { return softplus(x); });
      else
        z = pre[c];
      act[c].noalias() = z * ops.analysis.transpose();
    }
    tape.stage_pre.push_back(std::move(pre));
  }
  return act[0];
}

MatrixXd SpectralEquivariantNet::forward(const std::vector<MatrixXd>& input) const {
  Tape tape;
  return forward(input, tape);
}

VectorXd SpectralEquivariantNet::backward(const Tape& tape,
                                          const MatrixXd& grad_output) const {
  const MeshBasisOps& ops_int = stage_ops(cfg_.internal_degree);
  const MeshBasisOps& ops_out = stage_ops(cfg_.output_degree);

  VectorXd grad = VectorXd::Zero(params_.size());
  std::vector<MatrixXd> d_act = {grad_output};
  for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
    const LayerSpec& layer = layers_[li];
    const std::vector<int>& off =
        layer.degree == cfg_.output_degree ? degree_offsets_out_ : degree_offsets_in_;
    const int n_deg = layer.degree / 2 + 1;
    const std::vector<MatrixXd>& in = tape.layer_inputs[li];

    // Zonal layer: weight gradients and input gradients.
    double* gw = grad.data() + layer.param_offset;
    const double* w = params_.data() + layer.param_offset;
    std::vector<MatrixXd> d_in(layer.in_channels,
                               MatrixXd::Zero(in[0].rows(), in[0].cols()));
    for (int d = 0; d < n_deg; ++d) {
      const int c0 = off[d], width = off[d + 1] - off[d];
      for (int co = 0; co < layer.out_channels; ++co)
        for (int ci = 0; ci < layer.in_channels; ++ci) {
          const int idx = (d * layer.out_channels + co) * layer.in_channels + ci;
          gw[idx] += d_act[co]
                         .middleCols(c0, width)
                         .cwiseProduct(in[ci].middleCols(c0, width))
                         .sum();
          d_in[ci].middleCols(c0, width).noalias() +=
              w[idx] * d_act[co].middleCols(c0, width);
        }
    }
    double* gb = gw + n_deg * layer.out_channels * layer.in_channels;
    for (int co = 0; co < layer.out_channels; ++co)
      gb[co] += d_act[co].col(0).sum();

    if (li == 0) break;

    // Through the pointwise stage that fed this layer.
    const bool last_stage = (li + 1 == static_cast<int>(layers_.size()));
    const MeshBasisOps& ops = last_stage ? ops_out : ops_int;
    const std::vector<MatrixXd>& pre = tape.stage_pre[li - 1];
    std::vector<MatrixXd> d_prev(d_in.size());
    for (std::size_t c = 0; c < d_in.size(); ++c) {
      MatrixXd dz = d_in[c] * ops.analysis;  // batch x V
      if (cfg_.nonlinearity_enabled)
        dz.array() *= pre[c].unaryExpr([](double x) { return logistic(x); }).array();
      d_prev[c].noalias() = dz * ops_int.synthesis;
    }
    d_act = std::move(d_prev);
  }
  return grad;
}

VectorXd SpectralEquivariantNet::apply_coeffs(
    const std::vector<VectorXd>& channel_coeffs) const {
  std::vector<MatrixXd> input;
  input.reserve(channel_coeffs.size());
  for (const VectorXd& c : channel_coeffs) input.push_back(c.transpose());
  return forward(input).row(0).transpose();
}

OdfField apply_inverter(const SpectralEquivariantNet& net,
                        const MatrixXd& fitted_mesh_values,
                        const SphericalMesh& mesh) {
  if (fitted_mesh_values.rows() != net.config().input_channels ||
      fitted_mesh_values.cols() != mesh.vertex_count())
    throw InvalidInput("apply_inverter: input dimensions do not match net/mesh");
  const MeshBasisOps& in_ops = mesh_basis_ops(mesh, net.config().internal_degree);
  std::vector<VectorXd> coeffs;
  for (int c = 0; c < fitted_mesh_values.rows(); ++c)
    coeffs.push_back(in_ops.analysis * fitted_mesh_values.row(c).transpose());
  const VectorXd out = net.apply_coeffs(coeffs);
  const MeshBasisOps& out_ops = mesh_basis_ops(mesh, net.config().output_degree);
  OdfField odf;
  odf.mesh = &mesh;
  odf.values = out_ops.synthesis * out;
  if (!odf.values.allFinite()) throw NumericError("apply_inverter: non-finite output");
  return odf;
}

double bayes_risk_loss(const SpectralEquivariantNet& net,
                       const std::vector<std::vector<VectorXd>>& batch_inputs,
                       const std::vector<VectorXd>& batch_targets,
                       const SphericalMesh& mesh) {
  if (batch_inputs.empty() || batch_inputs.size() != batch_targets.size())
    throw InvalidInput("bayes_risk_loss: empty or mismatched batch");
  const std::size_t batch = batch_inputs.size();
  const int channels = net.config().input_channels;
  std::vector<MatrixXd> input(channels,
                              MatrixXd(batch, net.input_dimension()));
  for (std::size_t s = 0; s < batch; ++s)
    for (int c = 0; c < channels; ++c)
      input[c].row(s) = batch_inputs[s][c].transpose();
  const MatrixXd out = net.forward(input);
  const MeshBasisOps& ops = mesh_basis_ops(mesh, net.config().output_degree);
  const MatrixXd pred = out * ops.synthesis.transpose();  // batch x V
  double loss = 0.0;
  for (std::size_t s = 0; s < batch; ++s) {
    const VectorXd diff = batch_targets[s] - pred.row(s).transpose();
    loss += mesh.weights().dot(diff.cwiseAbs2());
  }
  return loss / static_cast<double>(batch);
}

void SpectralEquivariantNet::save_checkpoint(const std::string& path,
                                             std::int64_t iteration,
                                             std::uint64_t seed,
                                             const VectorXd& adam_m,
                                             const VectorXd& adam_v) const {
  TensorContainer c;
  nlohmann::json arch;
  arch["input_channels"] = cfg_.input_channels;
  arch["internal_degree"] = cfg_.internal_degree;
  arch["output_degree"] = cfg_.output_degree;
  arch["hidden_widths"] = cfg_.hidden_widths;
  arch["stage_mesh_level"] = cfg_.stage_mesh_level;
  arch["nonlinearity_enabled"] = cfg_.nonlinearity_enabled;
  c.meta["kind"] = "inverter";
  c.meta["arch"] = arch;
  c.meta["iteration"] = iteration;
  c.meta["seed"] = seed;
  c.meta["stage_mesh_hash"] =
      hash_hex(SphericalMesh::icosphere(cfg_.stage_mesh_level).content_hash());
  const auto to_f32 = [](const VectorXd& v) {
    std::vector<float> f(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
    return f;
  };
  c.add_f32("params", {params_.size()}, to_f32(params_));
  if (adam_m.size() > 0) {
    c.add_f32("adam_m", {adam_m.size()}, to_f32(adam_m));
    c.add_f32("adam_v", {adam_v.size()}, to_f32(adam_v));
  }
  c.save(path);
}

InverterCheckpoint load_inverter_checkpoint(const std::string& path) {
  TensorContainer c = TensorContainer::load(path);
  if (c.meta.value("kind", "") != "inverter")
    throw InvalidInput(path + ": not an inverter checkpoint");
  const nlohmann::json& arch = c.meta.at("arch");
  InverterConfig cfg;
  cfg.input_channels = arch.at("input_channels");
  cfg.internal_degree = arch.at("internal_degree");
  cfg.output_degree = arch.at("output_degree");
  cfg.hidden_widths = arch.at("hidden_widths").get<std::vector<int>>();
  cfg.stage_mesh_level = arch.at("stage_mesh_level");
  cfg.nonlinearity_enabled = arch.at("nonlinearity_enabled");
  InverterCheckpoint ckpt{SpectralEquivariantNet(cfg, 0), c.meta.value("iteration", 0ll),
                          c.meta.value("seed", 0ull), VectorXd(), VectorXd()};
  const auto& p = c.f32("params");
  if (static_cast<Eigen::Index>(p.size()) != ckpt.net.params().size())
    throw InvalidInput(path + ": parameter count mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) ckpt.net.params()[i] = p[i];
  if (c.has("adam_m")) {
    const auto& m = c.f32("adam_m");
    const auto& v = c.f32("adam_v");
    ckpt.adam_m.resize(m.size());
    ckpt.adam_v.resize(v.size());
    for (std::size_t i = 0; i < m.size(); ++i) ckpt.adam_m[i] = m[i];
    for (std::size_t i = 0; i < v.size(); ++i) ckpt.adam_v[i] = v[i];
  }
  return ckpt;
}

}  // namespace fiberinfer
