#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "basis.hpp"
#include "bessel.hpp"
#include "grid.hpp"

namespace bs2d {

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MemoryBudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class KernelForm { P, Q };
enum class SeriesKind { GAMMA1, GAMMA2, ETA1, ETA2 };
/// Boundary edge of the xi-interval: upper is xi = +l, lower is xi = -l.
enum class Side { upper, lower };

inline const char* to_string(SeriesKind k) {
  switch (k) {
    case SeriesKind::GAMMA1: return "GAMMA1";
    case SeriesKind::GAMMA2: return "GAMMA2";
    case SeriesKind::ETA1: return "ETA1";
    case SeriesKind::ETA2: return "ETA2";
  }
  return "?";
}

inline bool is_gamma(SeriesKind k) { return k == SeriesKind::GAMMA1 || k == SeriesKind::GAMMA2; }
inline int boundary_index(SeriesKind k) { return (k == SeriesKind::GAMMA1 || k == SeriesKind::ETA1) ? 1 : 2; }

/// Closed-form Volterra kernel p (I1) or q (J1) on Gamma1 = {|xi| <= |y| <= l}.
struct ClosedFormKernel {
  KernelForm kind = KernelForm::P;
  double lambda = 7.0;
  RectangleSpec rect;

  void validate() const {
    rect.validate();
    require(std::isfinite(lambda) && lambda > 0.0, "ClosedFormKernel: lambda must be > 0");
  }
};

namespace detail {

inline void check_gamma1(double y, double xi, const RectangleSpec& r) {
  const double tol = 1e-12 * r.l;
  require(std::abs(y) <= r.l + tol, "kernel evaluated with |y| > l");
  require(std::abs(xi) <= std::abs(y) + tol, "kernel evaluated with |xi| > |y|");
}

inline BesselRatio kernel_ratio(const ClosedFormKernel& k, double y, double xi) {
  const double w = std::max(0.0, k.lambda * (y - xi) * (y + xi));
  return bessel1_ratio(k.kind == KernelForm::P ? BesselKind::modified : BesselKind::ordinary, w);
}

}  // namespace detail

/// K(y, xi) = -(lambda/2)(y + xi) X1(z)/z with z^2 = lambda (y^2 - xi^2). This form
/// is entire in (y, xi) and equal to the sgn-weighted expression for either sign of y.
inline double eval_closed_form(const ClosedFormKernel& k, double y, double xi) {
  detail::check_gamma1(y, xi, k.rect);
  const auto r = detail::kernel_ratio(k, y, xi);
  return -0.5 * k.lambda * (y + xi) * r.f;
}

inline double eval_p(double y, double xi, const ClosedFormKernel& k) {
  require(k.kind == KernelForm::P, "eval_p: kernel is not of kind P");
  return eval_closed_form(k, y, xi);
}

inline double eval_q(double y, double xi, const ClosedFormKernel& k) {
  require(k.kind == KernelForm::Q, "eval_q: kernel is not of kind Q");
  return eval_closed_form(k, y, xi);
}

/// d/dxi K(y, xi).
inline double closed_form_dxi(const ClosedFormKernel& k, double y, double xi) {
  detail::check_gamma1(y, xi, k.rect);
  const auto r = detail::kernel_ratio(k, y, xi);
  const double lam = k.lambda;
  return -0.5 * lam * (r.f + (y + xi) * r.df * (-2.0 * lam * xi));
}

/// d^2/dxi^2 K(y, xi).
inline double closed_form_dxi2(const ClosedFormKernel& k, double y, double xi) {
  detail::check_gamma1(y, xi, k.rect);
  const auto r = detail::kernel_ratio(k, y, xi);
  const double lam = k.lambda;
  return -0.5 * lam * (-4.0 * lam * xi * r.df + (y + xi) * (4.0 * lam * lam * xi * xi * r.d2f - 2.0 * lam * r.df));
}

namespace detail {

/// Gauss-Legendre rule on [0, 1].
struct UnitRule {
  std::vector<double> t, w;
};

inline const UnitRule& unit_gauss16() {
  static const UnitRule rule = [] {
    using G = boost::math::quadrature::gauss<double, 16>;
    UnitRule r;
    const auto& a = G::abscissa();
    const auto& w = G::weights();
    for (std::size_t i = a.size(); i-- > 0;) {
      r.t.push_back(0.5 * (1.0 - a[i]));
      r.w.push_back(0.5 * w[i]);
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      r.t.push_back(0.5 * (1.0 + a[i]));
      r.w.push_back(0.5 * w[i]);
    }
    return r;
  }();
  return rule;
}

/// Sine coefficients (1/l) int_{-l}^{l} f varphi_m dxi, m = 1..M, by composite
/// Gauss-Legendre with f sampled once; about one oscillation of varphi_M per panel.
template <class F>
std::vector<double> sine_coefficients(F&& f, const RectangleSpec& r, int M) {
  const auto& rule = unit_gauss16();
  const int panels = std::max(32, M / 2 + 1);
  const double h = 2.0 * r.l / panels;
  const std::size_t nq = rule.t.size() * panels;
  std::vector<double> xi(nq), fw(nq);
  for (int p = 0; p < panels; ++p)
    for (std::size_t q = 0; q < rule.t.size(); ++q) {
      const std::size_t i = p * rule.t.size() + q;
      xi[i] = -r.l + (p + rule.t[q]) * h;
      fw[i] = f(xi[i]) * rule.w[q] * h / r.l;
    }
  std::vector<double> c(M, 0.0);
  for (int m = 1; m <= M; ++m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < nq; ++i) acc += fw[i] * eval_phi_y(m, xi[i], r);
    c[m - 1] = acc;
  }
  return c;
}

}  // namespace detail

inline std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// Adaptive Gauss-Kronrod on `pieces` equal sub-intervals. Accuracy is judged against
/// the integral of |f|, so small results of oscillatory integrands are accepted.
template <class F>
double integrate_gk(F&& f, double a, double b, int pieces = 1, double rel_tol = 1e-10) {
  using boost::math::quadrature::gauss_kronrod;
  pieces = std::max(1, pieces);
  const double h = (b - a) / pieces;
  double total = 0.0, err_total = 0.0, l1_total = 0.0;
  for (int p = 0; p < pieces; ++p) {
    const double lo = a + p * h;
    const double hi = (p == pieces - 1) ? b : a + (p + 1) * h;
    double err = 0.0, l1 = 0.0;
    total += gauss_kronrod<double, 31>::integrate(f, lo, hi, 15, 1e-13, &err, &l1);
    err_total += err;
    l1_total += l1;
  }
  if (!std::isfinite(total) || err_total > rel_tol * std::max(std::abs(total), l1_total) + 1e-300)
    throw QuadratureError("Gauss-Kronrod quadrature did not reach the requested tolerance (estimate " +
                          fmt_g(err_total) + " vs integral " + fmt_g(total) + ")");
  return total;
}

/// Coefficients (1/l) int varphi_m(xi) K(+-l, xi) dxi, m = 1..M, with y = +l for
/// index 1 and y = -l for index 2.
inline std::vector<double> compute_pm_coeffs(int index, const ClosedFormKernel& k, int M) {
  k.validate();
  require(index == 1 || index == 2, "compute_pm_coeffs: index must be 1 or 2");
  require(M >= 1, "compute_pm_coeffs: M must be >= 1");
  const double y = index == 1 ? k.rect.l : -k.rect.l;
  return detail::sine_coefficients([&](double xi) { return eval_closed_form(k, y, xi); }, k.rect, M);
}

/// L2 norm squared of xi -> K(+-l, xi) on [-l, l].
inline double closed_form_edge_norm_sq(int index, const ClosedFormKernel& k) {
  const double y = index == 1 ? k.rect.l : -k.rect.l;
  return integrate_gk([&](double xi) { const double v = eval_closed_form(k, y, xi); return v * v; }, -k.rect.l, k.rect.l, 4);
}

struct Truncation {
  int N = 0;
  int M = 0;
  bool operator==(const Truncation&) const = default;
};

/// Smallest n with exp(-n^2 pi^2 s_min / (4 half^2)) * coeff_abs_sum < tol.
inline int tail_rule_modes(double s_min, double half, double coeff_abs_sum, double tol) {
  require(s_min > 0.0, "tail_rule_modes: s_min must be > 0");
  if (coeff_abs_sum <= tol) return 1;
  const double need = std::log(coeff_abs_sum / tol);
  const double n = std::sqrt(need * 4.0 * half * half / (std::numbers::pi * std::numbers::pi * s_min));
  int out = std::max(1, static_cast<int>(std::ceil(n)));
  while (out > 1 && std::exp(-sine_eigenvalue(out - 1, half) * s_min) * coeff_abs_sum < tol) --out;
  while (std::exp(-sine_eigenvalue(out, half) * s_min) * coeff_abs_sum >= tol) ++out;
  return out;
}

constexpr int kCoefficientProbe = 256;
constexpr double kTailTolerance = 1e-8;

/// Truncated separable series kernel
///   gamma(x, theta, s, xi) = e^{growth s} G_L(x, theta, s) P(xi, s) / L,
///   G_L = sum_n e^{-mu_n s} phi_n(x) phi_n(theta),
///   P = sum_m e^{-nu_m s} c_m varphi_m(xi),
/// where c_m are the signed profile coefficients: +p_1m for GAMMA1, -p_2m for GAMMA2,
/// +q_1m for ETA1, -q_2m for ETA2. growth is lambda for gamma kinds and 0 for eta kinds.
class SeriesKernel {
 public:
  SeriesKernel() = default;

  SeriesKernel(SeriesKind kind, double lambda, const RectangleSpec& rect, Truncation trunc, double s_min)
      : kind_(kind), base_{is_gamma(kind) ? KernelForm::P : KernelForm::Q, lambda, rect}, trunc_(trunc), s_min_(s_min) {
    base_.validate();
    require(trunc.N >= 1 && trunc.M >= 1, "SeriesKernel: truncation must be >= 1");
    require(s_min > 0.0, "SeriesKernel: s_min must be > 0");
    set_coeffs(compute_pm_coeffs(boundary_index(kind), base_, trunc.M));
  }

  /// Truncation from the s-aware tail rule, with the coefficient sum taken over the
  /// first kCoefficientProbe modes. Optional caps reject truncations beyond a grid limit.
  static SeriesKernel with_tail_rule(SeriesKind kind, double lambda, const RectangleSpec& rect, double s_min,
                                     double tol = kTailTolerance, int cap_N = 0, int cap_M = 0) {
    SeriesKernel k;
    k.kind_ = kind;
    k.base_ = ClosedFormKernel{is_gamma(kind) ? KernelForm::P : KernelForm::Q, lambda, rect};
    k.base_.validate();
    require(s_min > 0.0, "SeriesKernel: s_min must be > 0");
    k.s_min_ = s_min;
    auto probe = compute_pm_coeffs(boundary_index(kind), k.base_, kCoefficientProbe);
    double sum = 0.0;
    for (double c : probe) sum += std::abs(c);
    k.trunc_.N = tail_rule_modes(s_min, rect.L, sum, tol);
    k.trunc_.M = tail_rule_modes(s_min, rect.l, sum, tol);
    if (cap_N > 0) k.trunc_.N = std::min(k.trunc_.N, cap_N);
    if (cap_M > 0) k.trunc_.M = std::min(k.trunc_.M, cap_M);
    require(k.trunc_.M <= kCoefficientProbe, "SeriesKernel: tail rule needs more than the probe mode count");
    probe.resize(k.trunc_.M);
    k.set_coeffs(std::move(probe));
    return k;
  }

  /// Same kernel with coefficients past (N, M) dropped.
  SeriesKernel truncated(Truncation t) const {
    require(t.N >= 1 && t.M >= 1 && t.M <= trunc_.M, "SeriesKernel::truncated: invalid truncation");
    SeriesKernel k = *this;
    k.trunc_ = t;
    auto c = coeffs_;
    c.resize(t.M);
    k.set_coeffs(std::move(c));
    return k;
  }

  /// Replace the coefficients (used for diagnostic kernels such as all-zero ones).
  SeriesKernel with_coeffs(std::vector<double> c) const {
    require(static_cast<int>(c.size()) == trunc_.M, "SeriesKernel::with_coeffs: size mismatch");
    SeriesKernel k = *this;
    k.set_coeffs(std::move(c));
    return k;
  }

  SeriesKind kind() const { return kind_; }
  double reaction() const { return base_.lambda; }
  double growth() const { return is_gamma(kind_) ? base_.lambda : 0.0; }
  const RectangleSpec& rect() const { return base_.rect; }
  const ClosedFormKernel& closed_form() const { return base_; }
  Truncation trunc() const { return trunc_; }
  int N() const { return trunc_.N; }
  int M() const { return trunc_.M; }
  double s_min() const { return s_min_; }
  double sign() const { return boundary_index(kind_) == 1 ? 1.0 : -1.0; }
  const std::vector<double>& coeffs() const { return coeffs_; }
  /// Signed coefficient c_m of the xi-profile, m = 1..M.
  double profile_coeff(int m) const { return profile_[m - 1]; }
  const std::vector<double>& profile_coeffs() const { return profile_; }

  /// s = 0 profile in xi: +-K(+-l, xi).
  double profile(double xi) const { return sign() * eval_closed_form(base_, edge_y(), xi); }
  double profile_dxi(double xi) const { return sign() * closed_form_dxi(base_, edge_y(), xi); }
  double profile_dxi2(double xi) const { return sign() * closed_form_dxi2(base_, edge_y(), xi); }

  double mu(int n) const { return sine_eigenvalue(n, base_.rect.L); }
  double nu(int m) const { return sine_eigenvalue(m, base_.rect.l); }

  void check_s(double s) const {
    require(s >= s_min_ * (1.0 - 1e-12), "series kernel evaluated below s_min");
  }

 private:
  double edge_y() const { return boundary_index(kind_) == 1 ? base_.rect.l : -base_.rect.l; }

  void set_coeffs(std::vector<double> c) {
    coeffs_ = std::move(c);
    profile_.resize(coeffs_.size());
    for (std::size_t m = 0; m < coeffs_.size(); ++m) profile_[m] = sign() * coeffs_[m];
  }

  SeriesKind kind_ = SeriesKind::GAMMA1;
  ClosedFormKernel base_;
  Truncation trunc_;
  double s_min_ = 0.01;
  std::vector<double> coeffs_;
  std::vector<double> profile_;
};

namespace detail {

inline double heat_factor_x(const SeriesKernel& k, double x, double theta, double s) {
  double acc = 0.0;
  for (int n = 1; n <= k.N(); ++n)
    acc += std::exp(-k.mu(n) * s) * eval_phi_x(n, x, k.rect()) * eval_phi_x(n, theta, k.rect());
  return acc;
}

inline double profile_factor(const SeriesKernel& k, double s, double xi) {
  double acc = 0.0;
  for (int m = 1; m <= k.M(); ++m) acc += std::exp(-k.nu(m) * s) * k.profile_coeff(m) * eval_phi_y(m, xi, k.rect());
  return acc;
}

inline double edge_slope(int m, Side side, const RectangleSpec& r) {
  return eval_phi_y_slope(m, side == Side::upper ? r.l : -r.l, r);
}

}  // namespace detail

inline double eval_gamma(const SeriesKernel& k, double x, double theta, double s, double xi) {
  k.check_s(s);
  const double G = detail::heat_factor_x(k, x, theta, s);
  const double P = detail::profile_factor(k, s, xi);
  return std::exp(k.growth() * s) * G * P / k.rect().L;
}

/// Truncated sum_m e^{-nu_m s} c_m varphi_m'(+-l).
inline double truncated_edge_flux(const SeriesKernel& k, double s, Side side) {
  double acc = 0.0;
  for (int m = 1; m <= k.M(); ++m) acc += std::exp(-k.nu(m) * s) * k.profile_coeff(m) * detail::edge_slope(m, side, k.rect());
  return acc;
}

/// d/dxi gamma at xi = +-l, term-wise differentiated.
inline double eval_gamma_xi_trace(const SeriesKernel& k, double x, double theta, double s, Side side) {
  k.check_s(s);
  const double G = detail::heat_factor_x(k, x, theta, s);
  const double T = truncated_edge_flux(k, s, side);
  return std::exp(k.growth() * s) * G * T / k.rect().L;
}

/// Factored cache of eval_gamma_xi_trace on (x-node, theta-node, s-node), s-nodes k*ds, k = 1..S.
class BoundaryTraceTensor {
 public:
  BoundaryTraceTensor() = default;
  BoundaryTraceTensor(const SeriesKernel& k, const UniformAxis& x_axis, double ds, int S, Side side,
                      std::size_t budget_bytes)
      : kind_(k.kind()), side_(side), axis_(x_axis), N_(k.N()), S_(S), ds_(ds), L_(k.rect().L) {
    require(S >= 1 && ds > 0.0, "precompute_trace_tensor: need at least one s-node");
    k.check_s(ds);
    const std::size_t nx = x_axis.count();
    const std::size_t need = sizeof(double) * (N_ * nx + static_cast<std::size_t>(N_) * S + 2 * static_cast<std::size_t>(S));
    if (need > budget_bytes)
      throw MemoryBudgetError("trace tensor needs " + std::to_string(need) + " bytes, budget is " +
                              std::to_string(budget_bytes));
    phi_.resize(N_ * nx);
    for (int n = 1; n <= N_; ++n)
      for (std::size_t i = 0; i < nx; ++i) phi_[(n - 1) * nx + i] = eval_phi_x(n, x_axis.node(static_cast<int>(i)), k.rect());
    decay_.resize(static_cast<std::size_t>(N_) * S);
    pref_.resize(S);
    flux_.resize(S);
    for (int j = 1; j <= S; ++j) {
      const double s = j * ds;
      for (int n = 1; n <= N_; ++n) decay_[static_cast<std::size_t>(j - 1) * N_ + (n - 1)] = std::exp(-k.mu(n) * s);
      pref_[j - 1] = std::exp(k.growth() * s);
      flux_[j - 1] = truncated_edge_flux(k, s, side);
    }
  }

  SeriesKind kind() const { return kind_; }
  Side side() const { return side_; }
  int s_nodes() const { return S_; }
  double s(int j) const { return j * ds_; }
  std::size_t bytes() const { return sizeof(double) * (phi_.size() + decay_.size() + pref_.size() + flux_.size()); }

  /// Entry at x-node ix, theta-node it, s-node j (1-based, s = j*ds).
  double value(int ix, int it, int j) const {
    require(j >= 1 && j <= S_, "BoundaryTraceTensor: s-node out of range");
    const std::size_t nx = axis_.count();
    double G = 0.0;
    for (int n = 1; n <= N_; ++n)
      G += decay_[static_cast<std::size_t>(j - 1) * N_ + (n - 1)] * phi_[(n - 1) * nx + ix] * phi_[(n - 1) * nx + it];
    return pref_[j - 1] * G * flux_[j - 1] / L_;
  }

 private:
  SeriesKind kind_ = SeriesKind::GAMMA1;
  Side side_ = Side::upper;
  UniformAxis axis_;
  int N_ = 0, S_ = 0;
  double ds_ = 0.0, L_ = 1.0;
  std::vector<double> phi_, decay_, pref_, flux_;
};

inline BoundaryTraceTensor precompute_trace_tensor(const SeriesKernel& k, const UniformAxis& x_axis, double ds, int S,
                                                   Side side, std::size_t budget_bytes = std::size_t(512) << 20) {
  return BoundaryTraceTensor(k, x_axis, ds, S, side, budget_bytes);
}

struct ResidualProbe {
  double x = 0.0, theta = 0.0, xi = 0.0;
};

struct PdeResidualReport {
  double residual_coarse = 0.0;     ///< max residual at step h
  double residual_fine = 0.0;       ///< max residual at step h/2
  double residual_richardson = 0.0; ///< max residual with Richardson-combined derivatives
  double order = 0.0;               ///< log2(coarse/fine)
  double scale = 0.0;               ///< max |gamma| over the probes
};

/// FD check of gamma_s = gamma_thetatheta + gamma_xixi + growth*gamma over probes and s-samples.
inline PdeResidualReport kernel_pde_residual(const SeriesKernel& k, const std::vector<ResidualProbe>& probes,
                                             const std::vector<double>& s_samples, double h) {
  require(h > 0.0, "kernel_pde_residual: step must be positive");
  const double L = k.rect().L, l = k.rect().l;
  for (const auto& p : probes)
    require(std::abs(p.theta) + h < L && std::abs(p.xi) + h < l && std::abs(p.x) <= L,
            "kernel_pde_residual: probe not interior");
  for (double s : s_samples) require(s - h >= k.s_min() * (1.0 - 1e-12), "kernel_pde_residual: s-window too close to s_min");

  struct Derivs {
    double ds, dtt, dxx;
  };
  auto derivs = [&](const ResidualProbe& p, double s, double hh) {
    auto g = [&](double th, double ss, double xi) { return eval_gamma(k, p.x, th, ss, xi); };
    const double c = g(p.theta, s, p.xi);
    Derivs d{};
    d.ds = (g(p.theta, s + hh, p.xi) - g(p.theta, s - hh, p.xi)) / (2.0 * hh);
    d.dtt = (g(p.theta + hh, s, p.xi) - 2.0 * c + g(p.theta - hh, s, p.xi)) / (hh * hh);
    d.dxx = (g(p.theta, s, p.xi + hh) - 2.0 * c + g(p.theta, s, p.xi - hh)) / (hh * hh);
    return d;
  };

  PdeResidualReport rep;
  for (const auto& p : probes)
    for (double s : s_samples) {
      const double c = eval_gamma(k, p.x, p.theta, s, p.xi);
      rep.scale = std::max(rep.scale, std::abs(c));
      const auto a = derivs(p, s, h);
      const auto b = derivs(p, s, 0.5 * h);
      const double ra = a.ds - a.dtt - a.dxx - k.growth() * c;
      const double rb = b.ds - b.dtt - b.dxx - k.growth() * c;
      const double rr = (4.0 * rb - ra) / 3.0;
      rep.residual_coarse = std::max(rep.residual_coarse, std::abs(ra));
      rep.residual_fine = std::max(rep.residual_fine, std::abs(rb));
      rep.residual_richardson = std::max(rep.residual_richardson, std::abs(rr));
    }
  rep.order = (rep.residual_fine > 0.0) ? std::log2(rep.residual_coarse / rep.residual_fine) : 0.0;
  return rep;
}

/// |int int gamma(x, theta, s, xi) f(theta) g(xi) - f(x) int profile(xi) g(xi)| for each s,
/// with the truncation re-chosen per s by the tail rule.
inline std::vector<double> weak_limit_test(const SeriesKernel& k, const std::function<double(double)>& f,
                                           const std::function<double(double)>& g, double x,
                                           const std::vector<double>& s_seq, double tol = kTailTolerance) {
  const auto& r = k.rect();
  for (std::size_t i = 1; i < s_seq.size(); ++i) require(s_seq[i] < s_seq[i - 1], "weak_limit_test: s must decrease");
  if (!s_seq.empty()) require(s_seq.back() > 0.0, "weak_limit_test: s must stay positive");

  auto all = compute_pm_coeffs(boundary_index(k.kind()), k.closed_form(), kCoefficientProbe);
  double sum = 0.0;
  for (double c : all) sum += std::abs(c);
  const double sign = k.sign();

  const double limit = f(x) * integrate_gk([&](double xi) { return k.profile(xi) * g(xi); }, -r.l, r.l, 8);

  std::vector<double> fn, gm;
  auto mode_of = [&](const std::function<double(double)>& fun, int n, double half, bool in_x) {
    return integrate_gk(
               [&](double t) { return fun(t) * (in_x ? eval_phi_x(n, t, r) : eval_phi_y(n, t, r)); }, -half, half,
               (n + 3) / 4) /
           half;
  };

  std::vector<double> out;
  out.reserve(s_seq.size());
  for (double s : s_seq) {
    const int N = tail_rule_modes(s, r.L, sum, tol);
    const int M = std::min(tail_rule_modes(s, r.l, sum, tol), kCoefficientProbe);
    while (static_cast<int>(fn.size()) < N) fn.push_back(mode_of(f, static_cast<int>(fn.size()) + 1, r.L, true));
    while (static_cast<int>(gm.size()) < M) gm.push_back(mode_of(g, static_cast<int>(gm.size()) + 1, r.l, false));
    double heat = 0.0;
    for (int n = 1; n <= N; ++n) heat += std::exp(-k.mu(n) * s) * fn[n - 1] * eval_phi_x(n, x, r);
    double prof = 0.0;
    for (int m = 1; m <= M; ++m) prof += std::exp(-k.nu(m) * s) * sign * all[m - 1] * gm[m - 1];
    const double value = std::exp(k.growth() * s) * heat * r.l * prof;
    out.push_back(std::abs(value - limit));
  }
  return out;
}

/// Sums sum_{m>=1} e^{-a m^2} and sum_{m>=1} (-1)^m e^{-a m^2}; Poisson-resummed for small a.
struct ThetaPair {
  double plain = 0.0;
  double alternating = 0.0;
};

inline ThetaPair theta_sums(double a) {
  require(a > 0.0, "theta_sums: argument must be positive");
  ThetaPair t;
  if (a >= 0.3) {
    for (int m = 1;; ++m) {
      const double e = std::exp(-a * m * m);
      t.plain += e;
      t.alternating += (m % 2 == 0) ? e : -e;
      if (e < 1e-18 * t.plain) break;
    }
    return t;
  }
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double root = std::sqrt(std::numbers::pi / a);
  double s1 = 1.0;
  for (int k = 1;; ++k) {
    const double e = std::exp(-pi2 * k * k / a);
    s1 += 2.0 * e;
    if (e < 1e-18) break;
  }
  double s2 = 0.0;
  for (int k = 0;; ++k) {
    const double kk = k + 0.5;
    const double e = std::exp(-pi2 * kk * kk / a);
    s2 += e;
    if (e <= 1e-18 * s2) break;
  }
  t.plain = 0.5 * (root * s1 - 1.0);
  t.alternating = 0.5 * (root * 2.0 * s2 - 1.0);
  return t;
}

/// Heat-evolved edge flux T(rho) = sum_m e^{-nu_m rho} c_m varphi_m'(+-l) of the kernel
/// profile, evaluated without truncation error near rho = 0. The profile g is split into
/// its linear endpoint interpolant, whose flux is a pair of theta sums, and a remainder
/// that vanishes at both edges and has O(1/m^3) coefficients.
/// Near rho = 0: T(rho) = singular_coefficient / sqrt(rho) + finite_part + o(1).
class BoundaryFlux {
 public:
  BoundaryFlux() = default;
  explicit BoundaryFlux(const SeriesKernel& k, int remainder_modes = 400) : l_(k.rect().l), rect_(k.rect()) {
    require(remainder_modes >= 1, "BoundaryFlux: need at least one remainder mode");
    g_hi_ = k.profile(l_);
    g_lo_ = k.profile(-l_);
    g2_hi_ = k.profile_dxi2(l_);
    g2_lo_ = k.profile_dxi2(-l_);
    const double ghi = g_hi_, glo = g_lo_, l = l_;
    auto remainder = [&k, ghi, glo, l](double xi) {
      return k.profile(xi) - (ghi * (xi + l) + glo * (l - xi)) / (2.0 * l);
    };
    rem_ = detail::sine_coefficients(remainder, rect_, remainder_modes);
    nu_.resize(remainder_modes);
    slope_hi_.resize(remainder_modes);
    slope_lo_.resize(remainder_modes);
    for (int m = 1; m <= remainder_modes; ++m) {
      nu_[m - 1] = sine_eigenvalue(m, l_);
      slope_hi_[m - 1] = detail::edge_slope(m, Side::upper, rect_);
      slope_lo_[m - 1] = detail::edge_slope(m, Side::lower, rect_);
    }
  }

  int remainder_modes() const { return static_cast<int>(rem_.size()); }
  double edge_value(Side side) const { return side == Side::upper ? g_hi_ : g_lo_; }

  double operator()(Side side, double rho) const {
    require(rho > 0.0, "BoundaryFlux: rho must be positive");
    const double a = std::numbers::pi * std::numbers::pi * rho / (4.0 * l_ * l_);
    const auto th = theta_sums(a);
    double lin = side == Side::upper ? (-g_hi_ * th.plain + g_lo_ * th.alternating) / l_
                                     : (-g_hi_ * th.alternating + g_lo_ * th.plain) / l_;
    const auto& slope = side == Side::upper ? slope_hi_ : slope_lo_;
    double acc = 0.0;
    for (std::size_t m = 0; m < rem_.size(); ++m) {
      const double e = std::exp(-nu_[m] * rho);
      acc += e * rem_[m] * slope[m];
      if (e < 1e-20) break;
    }
    return lin + acc;
  }

  /// c in T(rho) ~ c / sqrt(rho).
  double singular_coefficient(Side side) const {
    return (side == Side::upper ? -g_hi_ : g_lo_) / std::sqrt(std::numbers::pi);
  }

  /// lim_{rho->0} [T(rho) - c/sqrt(rho)], which equals the profile slope at the edge.
  double finite_part(Side side) const {
    const auto& slope = side == Side::upper ? slope_hi_ : slope_lo_;
    double acc = 0.0;
    for (std::size_t m = 0; m < rem_.size(); ++m) acc += rem_[m] * slope[m];
    const int M = static_cast<int>(rem_.size());
    const double z_all = boost::math::trigamma(static_cast<double>(M + 1));
    const double z_even = 0.25 * boost::math::trigamma(static_cast<double>(M / 2 + 1));
    const double z_alt = z_even - (z_all - z_even);
    const double c = 4.0 * l_ / (std::numbers::pi * std::numbers::pi);
    const double tail = side == Side::upper ? c * (g2_hi_ * z_all - g2_lo_ * z_alt) : -c * (g2_lo_ * z_all - g2_hi_ * z_alt);
    return (g_hi_ - g_lo_) / (2.0 * l_) + acc + tail;
  }

 private:
  double l_ = 1.0;
  RectangleSpec rect_;
  double g_hi_ = 0.0, g_lo_ = 0.0, g2_hi_ = 0.0, g2_lo_ = 0.0;
  std::vector<double> rem_, nu_, slope_hi_, slope_lo_;
};

/// Rows kind,n,m,coeff: the double-series coefficient c_m / L of phi_n(x) phi_n(theta) varphi_m(xi).
inline void write_kernel_coefficients(std::ostream& os, const SeriesKernel& k, bool header = true) {
  if (header) os << "kind,n,m,coeff\n";
  char buf[64];
  for (int n = 1; n <= k.N(); ++n)
    for (int m = 1; m <= k.M(); ++m) {
      std::snprintf(buf, sizeof buf, "%.17g", k.profile_coeff(m) / k.rect().L);
      os << to_string(k.kind()) << ',' << n << ',' << m << ',' << buf << '\n';
    }
}

}  // namespace bs2d
