#include "fiberinfer/sh_basis.hpp"

#include <algorithm>
#include <cmath>

namespace fiberinfer {

namespace {

// Fully normalized associated Legendre values P~_l^m(x) for m = 0..l_max,
// l = m..l_max, using the standard stable ascending recurrences. The
// normalization is such that the real spherical harmonics below are
// orthonormal on the sphere.
void normalized_legendre(int l_max, double x, MatrixXd& p) {
  const double sx = std::sqrt(std::max(0.0, 1.0 - x * x));
  p.resize(l_max + 1, l_max + 1);
  p(0, 0) = 1.0 / std::sqrt(kFourPi);
  for (int m = 1; m <= l_max; ++m)
    p(m, m) = -std::sqrt(1.0 + 0.5 / m) * sx * p(m - 1, m - 1);
  for (int m = 0; m < l_max; ++m)
    p(m + 1, m) = std::sqrt(2.0 * m + 3.0) * x * p(m, m);
  for (int m = 0; m <= l_max; ++m)
    for (int l = m + 2; l <= l_max; ++l) {
      const double a = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - static_cast<double>(m) * m));
      const double b = std::sqrt(((l - 1.0) * (l - 1.0) - static_cast<double>(m) * m) /
                                 (4.0 * (l - 1.0) * (l - 1.0) - 1.0));
      p(l, m) = a * (x * p(l - 1, m) - b * p(l - 2, m));
    }
}

}  // namespace

int ShBasis::dimension_for(int max_even_degree) {
  int k = 0;
  for (int l = 0; l <= max_even_degree; l += 2) k += 2 * l + 1;
  return k;
}

ShBasis::ShBasis(int max_even_degree) : max_degree_(max_even_degree) {
  if (max_even_degree < 0 || max_even_degree % 2 != 0)
    throw InvalidInput("ShBasis: degree must be even and non-negative");
  dim_ = dimension_for(max_even_degree);
  degrees_.reserve(dim_);
  for (int l = 0; l <= max_degree_; l += 2)
    for (int m = -l; m <= l; ++m) degrees_.push_back(l);
}

VectorXd ShBasis::eval_point(const Vector3d& u) const {
  if (std::abs(u.norm() - 1.0) > 1e-8)
    throw std::domain_error("ShBasis: point is not unit length");
  const double ct = std::clamp(u.z(), -1.0, 1.0);
  const double phi = std::atan2(u.y(), u.x());
  MatrixXd p;
  normalized_legendre(max_degree_, ct, p);

  VectorXd out(dim_);
  const double sqrt2 = std::sqrt(2.0);
  int k = 0;
  for (int l = 0; l <= max_degree_; l += 2) {
    for (int m = -l; m <= l; ++m, ++k) {
      if (m < 0)
        out[k] = sqrt2 * p(l, -m) * std::sin(-m * phi);
      else if (m == 0)
        out[k] = p(l, 0);
      else
        out[k] = sqrt2 * p(l, m) * std::cos(m * phi);
    }
  }
  return out;
}

MatrixXd ShBasis::eval(const std::vector<Vector3d>& points) const {
  MatrixXd out(points.size(), dim_);
  for (std::size_t i = 0; i < points.size(); ++i)
    out.row(i) = eval_point(points[i]).transpose();
  return out;
}

VectorXd ShBasis::ridge_diagonal() const {
  VectorXd r(dim_);
  for (int k = 0; k < dim_; ++k) {
    const double l = degrees_[k];
    r[k] = l * l * (l + 1.0) * (l + 1.0);
  }
  return r;
}

FitOperator::FitOperator(const AcquisitionScheme& scheme,
                         const std::vector<int>& shell_indices,
                         const ShBasis& basis, double lambda)
    : shell_indices_(shell_indices), degree_(basis.max_degree()), lambda_(lambda) {
  if (lambda < 0.0) throw InvalidInput("fit_signal: lambda must be >= 0");
  const VectorXd ridge = basis.ridge_diagonal();
  for (int l : shell_indices_) {
    const Shell& sh = scheme.shells().at(l);
    if (lambda == 0.0 && sh.count() < basis.dimension())
      throw InvalidInput(
          "fit_signal: fewer measurements than basis functions; use lambda > 0");
    MatrixXd phi = basis.eval(sh.directions);
    MatrixXd normal = phi.transpose() * phi;
    normal.diagonal() += lambda * ridge;
    Eigen::LLT<MatrixXd> llt(normal);
    if (llt.info() != Eigen::Success)
      throw InvalidInput(
          "fit_signal: singular normal equations (rank-deficient design); "
          "use lambda > 0");
    solve_op_.push_back(llt.solve(phi.transpose()));
    design_.push_back(std::move(phi));
  }
}

FittedSignal FitOperator::apply(const SignalSet& signals) const {
  FittedSignal fit;
  fit.degree = degree_;
  fit.lambda = lambda_;
  fit.coeffs.reserve(shell_indices_.size());
  for (std::size_t i = 0; i < shell_indices_.size(); ++i)
    fit.coeffs.push_back(solve_op_[i] * signals.shells.at(shell_indices_[i]));
  return fit;
}

std::vector<VectorXd> FitOperator::predict(const FittedSignal& fit) const {
  std::vector<VectorXd> out;
  out.reserve(design_.size());
  for (std::size_t i = 0; i < design_.size(); ++i)
    out.push_back(design_[i] * fit.coeffs.at(i));
  return out;
}

FittedSignal fit_signal_shells(const SignalSet& signals,
                               const AcquisitionScheme& scheme,
                               const std::vector<int>& shell_indices,
                               const ShBasis& basis, double lambda) {
  signals.validate_against(scheme);
  return FitOperator(scheme, shell_indices, basis, lambda).apply(signals);
}

FittedSignal fit_signal(const SignalSet& signals, const AcquisitionScheme& scheme,
                        const ShBasis& basis, double lambda) {
  std::vector<int> all(scheme.shell_count());
  for (int l = 0; l < scheme.shell_count(); ++l) all[l] = l;
  return fit_signal_shells(signals, scheme, all, basis, lambda);
}

MatrixXd resample(const FittedSignal& fit, const ShBasis& basis,
                  const std::vector<Vector3d>& points) {
  const MatrixXd phi = basis.eval(points);
  MatrixXd out(fit.coeffs.size(), points.size());
  for (std::size_t l = 0; l < fit.coeffs.size(); ++l)
    out.row(l) = (phi * fit.coeffs[l]).transpose();
  return out;
}

}  // namespace fiberinfer
