#include "fiberinfer/forward_model.hpp"

#include <algorithm>
#include <cmath>

#include "fiberinfer/rng.hpp"

namespace fiberinfer {

namespace {

constexpr double kDiffLo = 0.2;
constexpr double kDiffHi = 3.0;
constexpr double kPerpHi = 0.8 * kDiffHi;
constexpr double kPerpRatio = 0.8;

const ParamSupport kSupports[kParamCount] = {
    {kDiffLo, kDiffHi},  // d_a
    {kDiffLo, kDiffHi},  // d_e_par
    {0.0, kPerpHi},      // d_e_perp
    {0.0, 1.0},          // z1
    {0.0, 1.0},          // z2
};
const char* kParamNames[kParamCount] = {"d_a", "d_e_par", "d_e_perp", "z1", "z2"};

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    x[i] = -t;
    x[n - 1 - i] = t;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
}

}  // namespace

const ParamSupport& param_support(int index) { return kSupports[index]; }
const char* param_name(int index) { return kParamNames[index]; }

bool KernelParams::in_polytope() const {
  return d_a >= kDiffLo && d_a <= kDiffHi && d_e_par >= kDiffLo &&
         d_e_par <= kDiffHi && d_e_perp > 0.0 &&
         d_e_perp <= kPerpRatio * d_e_par;
}

Vector3d hemisphere_canonical(const Vector3d& m) {
  if (m.z() > 0.0) return m;
  if (m.z() < 0.0) return -m;
  if (m.y() > 0.0) return m;
  if (m.y() < 0.0) return -m;
  return m.x() >= 0.0 ? m : Vector3d(-m);
}

void FiberConfig::validate() const {
  if (n < 1 || n > 3) throw InvalidInput("FiberConfig: n must be in {1,2,3}");
  if (static_cast<int>(orientations.size()) != n ||
      static_cast<int>(kernels.size()) != n)
    throw InvalidInput("FiberConfig: field sizes do not match n");
  if (!kappa.empty() && static_cast<int>(kappa.size()) != n)
    throw InvalidInput("FiberConfig: kappa size does not match n");
  double zsum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (std::abs(orientations[i].norm() - 1.0) > 1e-12)
      throw InvalidInput("FiberConfig: orientation not unit length");
    if (!kernels[i].valid()) throw InvalidInput("FiberConfig: kernel outside polytope");
    if (kernels[i].z1 < 0.1) throw InvalidInput("FiberConfig: z1 below 0.1");
    zsum += kernels[i].z1 + kernels[i].z2;
  }
  if (std::abs(zsum - 1.0) > 1e-10)
    throw InvalidInput("FiberConfig: z weights do not sum to 1");
  std::vector<double> angles;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double c = std::min(1.0, std::abs(orientations[i].dot(orientations[j])));
      angles.push_back(std::acos(c) * 180.0 / kPi);
    }
  std::sort(angles.begin(), angles.end());
  if (!angles.empty() && angles[0] < 10.0 - 1e-9)
    throw InvalidInput("FiberConfig: crossing angle below 10 degrees");
  if (n == 3 && angles[1] < 30.0 - 1e-9)
    throw InvalidInput("FiberConfig: second-smallest angle below 30 degrees");
  for (double k : kappa)
    if (!(k >= 0.0)) throw InvalidInput("FiberConfig: negative kappa");
}

void SignalSet::validate_against(const AcquisitionScheme& scheme) const {
  if (static_cast<int>(shells.size()) != scheme.shell_count())
    throw InvalidInput("SignalSet: shell count mismatch");
  for (int l = 0; l < scheme.shell_count(); ++l)
    if (shells[l].size() != scheme.shells()[l].count())
      throw InvalidInput("SignalSet: measurement count mismatch");
}

std::int64_t SignalSet::total_size() const {
  std::int64_t n = 0;
  for (const VectorXd& s : shells) n += s.size();
  return n;
}

double kernel_eval(double t, double b, const KernelParams& k) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("kernel_eval: t outside [0,1]");
  if (!(b >= 0.0)) throw std::domain_error("kernel_eval: negative b");
  return k.z1 * std::exp(-b * k.d_a * t) +
         k.z2 * std::exp(-b * k.d_e_perp - b * (k.d_e_par - k.d_e_perp) * t);
}

double kernel_eval_dt(double t, double b, const KernelParams& k) {
  const double delta = k.d_e_par - k.d_e_perp;
  return -k.z1 * b * k.d_a * std::exp(-b * k.d_a * t) -
         k.z2 * b * delta * std::exp(-b * k.d_e_perp - b * delta * t);
}

double kernel_mean_integral(double b, const KernelParams& k) {
  // integral_0^1 exp(-c t) dt = (1 - e^-c)/c, with the c -> 0 limit handled.
  const auto expint = [](double c) {
    return std::abs(c) < 1e-10 ? 1.0 - 0.5 * c : -std::expm1(-c) / c;
  };
  const double delta = k.d_e_par - k.d_e_perp;
  return k.z1 * expint(b * k.d_a) +
         k.z2 * std::exp(-b * k.d_e_perp) * expint(b * delta);
}

SignalSet forward_signal(const FiberConfig& cfg, const AcquisitionScheme& scheme) {
  cfg.validate();
  if (!cfg.kappa.empty())
    throw InvalidInput("forward_signal: config carries finite kappa; use forward_signal_watson");
  SignalSet out;
  out.shells.reserve(scheme.shell_count());
  for (const Shell& sh : scheme.shells()) {
    VectorXd s(sh.count());
    for (int m = 0; m < sh.count(); ++m) {
      double v = 0.0;
      for (int i = 0; i < cfg.n; ++i) {
        const double d = sh.directions[m].dot(cfg.orientations[i]);
        v += kernel_eval(std::min(1.0, d * d), sh.b, cfg.kernels[i]);
      }
      s[m] = v;
    }
    out.shells.push_back(std::move(s));
  }
  return out;
}

double watson_log_peak(double kappa) {
  // I = integral_0^1 exp(kappa (s^2 - 1)) ds, computed on a scale where the
  // integrand is <= 1; C(kappa) e^kappa = 1 / (2 pi I).
  static thread_local std::vector<double> gx, gw;
  if (gx.empty()) gauss_legendre(256, gx, gw);
  double integral = 0.0;
  for (std::size_t i = 0; i < gx.size(); ++i) {
    const double s = 0.5 * (gx[i] + 1.0);
    integral += 0.5 * gw[i] * std::exp(kappa * (s * s - 1.0));
  }
  return -std::log(2.0 * kPi * integral);
}

double watson_density(const Vector3d& u, const Vector3d& m, double kappa) {
  const double c = m.dot(u);
  return std::exp(watson_log_peak(kappa) + kappa * (c * c - 1.0));
}

namespace {

// Hemisphere quadrature rule aligned with a fiber axis, with the Watson
// weight folded into the node weights. Two regimes: plain Gauss-Legendre in
// t = cos(theta) for moderate kappa, and for large kappa a change of
// variables w = kappa (1 - t^2) that resolves the O(1/sqrt(kappa)) lobe.
struct WatsonRule {
  std::vector<double> t;       // polar nodes in [0,1]
  std::vector<double> weight;  // includes C(kappa) and the 2 pi / n_phi factor
  int n_phi = 0;
};

WatsonRule watson_rule(double kappa, int order) {
  WatsonRule rule;
  rule.n_phi = 2 * ((27 * order) / 20 / 2 + 1);  // ~1.35x polar count, even
  std::vector<double> gx, gw;
  gauss_legendre(order, gx, gw);
  rule.t.resize(order);
  rule.weight.resize(order);
  const double log_peak = watson_log_peak(kappa);
  const double phi_w = 2.0 * kPi / rule.n_phi;
  if (kappa < 40.0) {
    for (int i = 0; i < order; ++i) {
      const double t = 0.5 * (gx[i] + 1.0);
      rule.t[i] = t;
      rule.weight[i] =
          0.5 * gw[i] * std::exp(log_peak + kappa * (t * t - 1.0)) * phi_w;
    }
  } else {
    // w = kappa (1 - t^2); truncate where exp(-w) is negligible.
    const double wmax = std::min(kappa, 46.0);
    for (int i = 0; i < order; ++i) {
      const double w = 0.5 * (gx[i] + 1.0) * wmax;
      const double t = std::sqrt(1.0 - w / kappa);
      rule.t[i] = t;
      rule.weight[i] = 0.5 * gw[i] * wmax * std::exp(log_peak - w) /
                       (2.0 * kappa * t) * phi_w;
    }
  }
  return rule;
}

// Signal of one Watson-convolved fiber at all measurements of one shell.
void accumulate_watson_fiber(const Shell& sh, const Vector3d& axis,
                             const KernelParams& k, double kappa, int order,
                             VectorXd& out) {
  const WatsonRule rule = watson_rule(kappa, order);
  // Orthonormal frame around the fiber axis.
  Vector3d e1 = std::abs(axis.z()) < 0.9 ? axis.cross(Vector3d(0, 0, 1))
                                         : axis.cross(Vector3d(1, 0, 0));
  e1.normalize();
  const Vector3d e2 = axis.cross(e1);
  const int m_count = sh.count();
  const double delta = k.d_e_par - k.d_e_perp;
  Eigen::ArrayXd pa(m_count), p1(m_count), p2(m_count);
  for (int m = 0; m < m_count; ++m) {
    pa[m] = sh.directions[m].dot(axis);
    p1[m] = sh.directions[m].dot(e1);
    p2[m] = sh.directions[m].dot(e2);
  }
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(m_count);
  for (std::size_t i = 0; i < rule.t.size(); ++i) {
    const double t = rule.t[i];
    const double r = std::sqrt(std::max(0.0, 1.0 - t * t));
    Eigen::ArrayXd shell_acc = Eigen::ArrayXd::Zero(m_count);
    for (int j = 0; j < rule.n_phi; ++j) {
      const double phi = (2.0 * kPi * j) / rule.n_phi;
      const double c1 = r * std::cos(phi), c2 = r * std::sin(phi);
      // x = (p.u)^2 for u = t*axis + c1*e1 + c2*e2
      const Eigen::ArrayXd dot = t * pa + c1 * p1 + c2 * p2;
      const Eigen::ArrayXd x = dot.square().min(1.0);
      shell_acc += k.z1 * (-sh.b * k.d_a * x).exp() +
                   k.z2 * std::exp(-sh.b * k.d_e_perp) * (-sh.b * delta * x).exp();
    }
    acc += rule.weight[i] * shell_acc;
  }
  out += acc.matrix();
}

}  // namespace

SignalSet forward_signal_watson(const FiberConfig& cfg,
                                const AcquisitionScheme& scheme,
                                int quadrature_order) {
  cfg.validate();
  if (cfg.kappa.empty())
    throw InvalidInput("forward_signal_watson: config has no kappa values");
  if (quadrature_order < 8) throw InvalidInput("forward_signal_watson: order too small");

  const auto evaluate = [&](int order) {
    SignalSet out;
    for (const Shell& sh : scheme.shells()) {
      VectorXd s = VectorXd::Zero(sh.count());
      for (int i = 0; i < cfg.n; ++i)
        accumulate_watson_fiber(sh, cfg.orientations[i], cfg.kernels[i],
                                cfg.kappa[i], order, s);
      out.shells.push_back(std::move(s));
    }
    return out;
  };

  SignalSet coarse = evaluate(quadrature_order);
  SignalSet fine = evaluate(2 * quadrature_order);
  double max_diff = 0.0;
  for (std::size_t l = 0; l < coarse.shells.size(); ++l)
    max_diff = std::max(max_diff,
                        (coarse.shells[l] - fine.shells[l]).cwiseAbs().maxCoeff());
  if (max_diff > 1e-6)
    throw NumericError("forward_signal_watson: quadrature not converged (delta " +
                       std::to_string(max_diff) + "); increase quadrature_order");
  return fine;
}

SignalSet add_noise(const SignalSet& clean, double sigma_e, std::uint64_t seed) {
  if (!(sigma_e >= 0.0)) throw InvalidInput("add_noise: sigma_e must be >= 0");
  if (sigma_e == 0.0) return clean;
  RandomStream rng(seed);
  SignalSet out = clean;
  for (VectorXd& s : out.shells)
    for (Eigen::Index i = 0; i < s.size(); ++i) s[i] += sigma_e * rng.normal();
  return out;
}

}  // namespace fiberinfer
