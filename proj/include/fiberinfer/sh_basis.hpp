#pragma once

#include <vector>

#include "fiberinfer/forward_model.hpp"

namespace fiberinfer {

/// Real symmetric (even-degree) spherical harmonic basis, orthonormal on S^2.
/// Basis index k enumerates degrees l = 0, 2, ..., max_degree and orders
/// m = -l..l within each degree; K = sum (2l+1) (degree 20 gives K = 231).
class ShBasis {
 public:
  explicit ShBasis(int max_even_degree);

  int max_degree() const { return max_degree_; }
  int dimension() const { return dim_; }
  static int dimension_for(int max_even_degree);

  /// Degree l of basis column k.
  int degree_of(int k) const { return degrees_[k]; }

  /// phi(u) as a K-vector; u must be unit length (throws std::domain_error).
  VectorXd eval_point(const Vector3d& u) const;

  /// Basis evaluation matrix, |points| x K; antipodal inputs give equal rows.
  MatrixXd eval(const std::vector<Vector3d>& points) const;

  /// Laplace-Beltrami ridge weights l^2 (l+1)^2 per column.
  VectorXd ridge_diagonal() const;

 private:
  int max_degree_;
  int dim_;
  std::vector<int> degrees_;
};

/// Per-shell spherical harmonic coefficients of a fitted signal.
struct FittedSignal {
  std::vector<VectorXd> coeffs;  // one K_fit-vector per shell of the scheme
  int degree = 0;
  double lambda = 0.0;

  const VectorXd& shell(int l) const { return coeffs[l]; }
};

/// Per-shell penalized least squares c_l = (Phi^T Phi + lambda R)^-1 Phi^T s_l
/// with R = diag(l^2 (l+1)^2). lambda = 0 requires M_l >= K and a full-rank
/// design; a singular system raises InvalidInput advising lambda > 0.
FittedSignal fit_signal(const SignalSet& signals, const AcquisitionScheme& scheme,
                        const ShBasis& basis, double lambda);

/// Same fit restricted to the given shells (pipeline use: b > 0 shells only).
FittedSignal fit_signal_shells(const SignalSet& signals,
                               const AcquisitionScheme& scheme,
                               const std::vector<int>& shell_indices,
                               const ShBasis& basis, double lambda);

/// Cached per-scheme fit operator: applying it is two small mat-vecs, which
/// is what makes the bootstrap loop cheap.
class FitOperator {
 public:
  FitOperator(const AcquisitionScheme& scheme, const std::vector<int>& shell_indices,
              const ShBasis& basis, double lambda);

  FittedSignal apply(const SignalSet& signals) const;
  /// Fitted values at the design directions of each selected shell.
  std::vector<VectorXd> predict(const FittedSignal& fit) const;
  const std::vector<int>& shell_indices() const { return shell_indices_; }
  int degree() const { return degree_; }
  double lambda() const { return lambda_; }

 private:
  std::vector<int> shell_indices_;
  std::vector<MatrixXd> design_;    // Phi per shell
  std::vector<MatrixXd> solve_op_;  // (Phi^T Phi + lambda R)^-1 Phi^T per shell
  int degree_;
  double lambda_;
};

/// Evaluate a fitted signal on arbitrary unit points: entry (l, v).
MatrixXd resample(const FittedSignal& fit, const ShBasis& basis,
                  const std::vector<Vector3d>& points);

}  // namespace fiberinfer
