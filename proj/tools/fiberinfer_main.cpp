// Temporary scratch main; replaced by the real CLI later in the build.
#include <chrono>
#include <cstdio>

#include "fiberinfer/train.hpp"

using namespace fiberinfer;

int main() {
  const AcquisitionScheme& scheme = AcquisitionScheme::builtin_default();
  InverterConfig net_cfg;
  SpectralEquivariantNet net(net_cfg, 7);
  std::printf("params: %ld\n", (long)net.params().size());

  InverterTrainConfig tc;
  tc.iterations = 10;
  tc.batch_size = 256;
  tc.threads = 2;
  tc.log_every = 1;
  const auto source = algorithm_s2_source(scheme, tc);

  // 1) FD gradcheck on a tiny batch.
  {
    const SphericalMesh& mesh = SphericalMesh::icosphere(tc.train_mesh_level);
    const MeshBasisOps& ops = mesh_basis_ops(mesh, net.config().output_degree);
    const int B = 4;
    std::vector<InverterSample> batch(B);
    for (int s = 0; s < B; ++s) batch[s] = source(5, s);
    std::vector<MatrixXd> input(2, MatrixXd(B, net.input_dimension()));
    for (int s = 0; s < B; ++s)
      for (int c = 0; c < 2; ++c) input[c].row(s) = batch[s].coeffs[c].transpose();
    const auto loss_fn = [&]() {
      const MatrixXd out = net.forward(input);
      const MatrixXd pred = out * ops.synthesis.transpose();
      double loss = 0;
      for (int s = 0; s < B; ++s) {
        const VectorXd diff = pred.row(s).transpose() - batch[s].target;
        loss += mesh.weights().dot(diff.cwiseAbs2());
      }
      return loss / B;
    };
    SpectralEquivariantNet::Tape tape;
    const MatrixXd out = net.forward(input, tape);
    const MatrixXd pred = out * ops.synthesis.transpose();
    MatrixXd d_pred(pred.rows(), pred.cols());
    for (int s = 0; s < B; ++s) {
      const VectorXd diff = pred.row(s).transpose() - batch[s].target;
      d_pred.row(s) = (2.0 / B) * diff.cwiseProduct(mesh.weights()).transpose();
    }
    const VectorXd grad = net.backward(tape, d_pred * ops.synthesis);
    RandomStream rng(3);
    double max_rel = 0;
    for (int t = 0; t < 20; ++t) {
      const int idx = (int)rng.below(net.params().size());
      const double h = 1e-4;
      const double orig = net.params()[idx];
      net.params()[idx] = orig + h;
      const double lp = loss_fn();
      net.params()[idx] = orig - h;
      const double lm = loss_fn();
      net.params()[idx] = orig;
      const double fd = (lp - lm) / (2 * h);
      const double rel = std::abs(fd - grad[idx]) / std::max(1e-8, std::abs(fd));
      max_rel = std::max(max_rel, rel);
    }
    std::printf("gradcheck max rel err: %.3e\n", max_rel);
  }

  // 2) Exact equivariance with nonlinearities disabled.
  {
    InverterConfig lin_cfg = net_cfg;
    lin_cfg.nonlinearity_enabled = false;
    SpectralEquivariantNet lin(lin_cfg, 7);
    const SphericalMesh& mesh = SphericalMesh::icosphere(4);
    const MeshBasisOps& ops8 = mesh_basis_ops(mesh, 8);
    const MeshBasisOps& ops20 = mesh_basis_ops(mesh, 20);
    RandomStream rng(9);
    double max_dev = 0;
    for (int t = 0; t < 5; ++t) {
      const Vector3d axis = rng.unit_vector();
      const Eigen::Matrix3d R =
          Eigen::AngleAxisd(rng.uniform(0, kPi), axis).toRotationMatrix();
      // rotation operators on coefficients via exact band-limited resampling
      std::vector<Vector3d> rot_pts(mesh.vertex_count());
      for (int v = 0; v < mesh.vertex_count(); ++v)
        rot_pts[v] = (R.transpose() * mesh.vertices()[v]).normalized();
      const ShBasis b8(8), b20(20);
      const MatrixXd rot8 = ops8.analysis * b8.eval(rot_pts);    // K8 x K8
      const MatrixXd rot20 = ops20.analysis * b20.eval(rot_pts); // K20 x K20
      std::vector<VectorXd> x = {VectorXd::Random(45), VectorXd::Random(45)};
      std::vector<VectorXd> xr = {rot8 * x[0], rot8 * x[1]};
      const VectorXd y1 = rot20 * lin.apply_coeffs(x);
      const VectorXd y2 = lin.apply_coeffs(xr);
      max_dev = std::max(max_dev, (y1 - y2).cwiseAbs().maxCoeff());
    }
    std::printf("linear equivariance max dev: %.3e\n", max_dev);
  }

  // 3) Timing: 10 training iterations at batch 256.
  const auto t0 = std::chrono::steady_clock::now();
  auto result = train_inverter(std::move(net), tc, source);
  const auto t1 = std::chrono::steady_clock::now();
  std::printf("10 iters: %.2fs (%.0f ms/iter), loss %g -> %g\n",
              std::chrono::duration<double>(t1 - t0).count(),
              std::chrono::duration<double, std::milli>(t1 - t0).count() / 10,
              result.log.front().loss, result.log.back().loss);
  return 0;
}
