#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fiberinfer/common.hpp"
#include "fiberinfer/scheme.hpp"

namespace fiberinfer {

/// Bi-exponential per-fiber kernel parameters. Diffusivities in um^2/ms,
/// weights unitless. z1 = w*v (intra-axonal), z2 = w*(1-v) (extra-axonal).
struct KernelParams {
  double d_a = 0.0;       // intra-axonal parallel diffusivity
  double d_e_par = 0.0;   // extra-axonal parallel diffusivity
  double d_e_perp = 0.0;  // extra-axonal perpendicular diffusivity
  double z1 = 0.0;
  double z2 = 0.0;

  bool in_polytope() const;  // box bounds + d_e_perp <= 0.8 d_e_par, > 0
  bool valid() const { return in_polytope() && z1 >= 0.0 && z2 >= 0.0; }
};

/// Prior support intervals per scalar parameter, shared by sampling, HDR
/// construction and the NLLS box constraints.
struct ParamSupport {
  double lo, hi;
  double width() const { return hi - lo; }
};
/// Index order everywhere a 5-vector of kernel parameters appears:
/// (d_a, d_e_par, d_e_perp, z1, z2).
inline constexpr int kParamCount = 5;
const ParamSupport& param_support(int index);
const char* param_name(int index);

/// Ground-truth voxel configuration: n fibers, upper-hemisphere orientations
/// and per-fiber kernels. `kappa` empty means the large-kappa analytic model.
struct FiberConfig {
  int n = 0;
  std::vector<Vector3d> orientations;
  std::vector<KernelParams> kernels;
  std::vector<double> kappa;

  void validate() const;  // throws InvalidInput on any violated invariant
};

/// Per-shell signal vectors aligned with an AcquisitionScheme.
struct SignalSet {
  std::vector<VectorXd> shells;

  void validate_against(const AcquisitionScheme& scheme) const;
  std::int64_t total_size() const;
};

/// Canonical upper-hemisphere representative of an axis: non-negative z,
/// ties broken by non-negative y, then x.
Vector3d hemisphere_canonical(const Vector3d& m);

/// Kernel decay value at t = (p.m)^2 for b-value b (Eq. of the standard
/// two-compartment model, scaled by the mixture weights).
/// Throws std::domain_error for t outside [0,1] or b < 0.
double kernel_eval(double t, double b, const KernelParams& k);

/// d/dt of kernel_eval (non-positive on [0,1]).
double kernel_eval_dt(double t, double b, const KernelParams& k);

/// Integral of kernel_eval over t in [0,1], closed form. This is the
/// per-shell mean that centering removes in the demixing stage.
double kernel_mean_integral(double b, const KernelParams& k);

/// Analytic large-kappa forward model: per measurement, the sum over fibers
/// of kernel_eval((p.m_i)^2, b_l, xi_i). Requires cfg.kappa empty.
SignalSet forward_signal(const FiberConfig& cfg, const AcquisitionScheme& scheme);

/// Finite-kappa forward model: spherical convolution of the kernel with a
/// Watson density of concentration kappa_i per fiber, by fiber-aligned
/// numerical quadrature over the hemisphere. quadrature_order is the number
/// of polar nodes (default 48 gives a >= 5810-node product grid). Throws
/// NumericError if doubling the order moves any output by more than 1e-6.
SignalSet forward_signal_watson(const FiberConfig& cfg,
                                const AcquisitionScheme& scheme,
                                int quadrature_order = 48);

/// Adds i.i.d. Gaussian noise with standard deviation sigma_e to every entry;
/// sigma_e = 0 returns the input bit-exactly.
SignalSet add_noise(const SignalSet& clean, double sigma_e, std::uint64_t seed);

/// Watson density per Eq.-4 normalization (integrates to 1 per hemisphere):
/// C(kappa) * exp(kappa (m.u)^2), evaluated stably for large kappa.
double watson_density(const Vector3d& u, const Vector3d& m, double kappa);

/// log(C(kappa) e^kappa) = -log(2 pi integral_0^1 exp(kappa (s^2-1)) ds);
/// the scaled normalizer that keeps large-kappa evaluation finite.
double watson_log_peak(double kappa);

}  // namespace fiberinfer
