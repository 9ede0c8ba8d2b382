#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "basis.hpp"
#include "grid.hpp"
#include "kernels.hpp"
#include "norms.hpp"
#include "transforms.hpp"

namespace bs2d {

// ---------------------------------------------------------------- Lyapunov functionals

struct MuFeasibility {
  double dissipation_margin = 0.0;  ///< (2 - mu1 - mu2)/(4L^2) + 1/(2l^2) - mu3 - mu4
  double edge_margin = 0.0;         ///< min_i (1 - 8l/(3 mu_i))
  bool feasible() const { return dissipation_margin > 0.0 && edge_margin > 0.0; }
};

struct LyapunovParams {
  double b = 1.0;
  std::array<double, 4> mu{0.5, 0.5, 3.0, 3.0};

  void validate() const {
    require(std::isfinite(b) && b > 0.0, "LyapunovParams: b must be > 0");
    for (double m : mu) require(std::isfinite(m) && m > 0.0, "LyapunovParams: mu_i must be > 0");
  }

  MuFeasibility feasibility(const RectangleSpec& r) const {
    MuFeasibility f;
    f.dissipation_margin = (2.0 - mu[0] - mu[1]) / (4.0 * r.L * r.L) + 1.0 / (2.0 * r.l * r.l) - mu[2] - mu[3];
    f.edge_margin = 1.0;
    for (double m : mu) f.edge_margin = std::min(f.edge_margin, 1.0 - 8.0 * r.l / (3.0 * m));
    return f;
  }
};

/// V1 = int m^2 + sum_i int int e^{b s} (z_i^2 + z_ix^2 + z_is^2).
inline double lyapunov_V1(const Field2D& m, const DelayField& z1, const DelayField& z2, const LyapunovParams& p) {
  p.validate();
  require(z1.grid() == z2.grid(), "lyapunov_V1: delay fields on different grids");
  return integral_sq(m) + weighted_H1_sq(z1, p.b) + weighted_H1_sq(z2, p.b);
}

inline double lyapunov_V2(const Field2D& w, const DelayField& z1, const DelayField& z2) {
  require(z1.grid() == z2.grid(), "lyapunov_V2: delay fields on different grids");
  return integral_sq(w) + weighted_H1_sq(z1, 0.0) + weighted_H1_sq(z2, 0.0);
}

struct SandwichSample {
  double V1 = 0.0, V2 = 0.0;
  double alpha4 = 0.25, beta4 = 0.0;
  bool lower_ok() const { return alpha4 * V2 <= V1 * (1.0 + 1e-12); }
  bool upper_ok() const { return V1 <= beta4 * V2 * (1.0 + 1e-12); }
};

/// V1 with m built from w and the s = 0 rows of z1, z2.
inline SandwichSample lyapunov_sandwich(const Field2D& w, const DelayField& z1, const DelayField& z2, const LyapunovParams& p) {
  const Field2D m = change_of_variable_m(w, z1.row(0), z2.row(0));
  SandwichSample s;
  s.V1 = lyapunov_V1(m, z1, z2, p);
  s.V2 = lyapunov_V2(w, z1, z2);
  s.beta4 = 3.0 + std::exp(p.b * z1.grid().tau);
  return s;
}

struct TargetState {
  Field2D w;
  DelayField z1, z2;
};

/// Random target-system state satisfying the compatibility conditions: z_i vanish at
/// x = +-L and s = tau, w = (band-limited interior) + (linear-in-y lift of z_i(x, 0)).
inline TargetState random_target_state(const Grid2D& g, const DelayGrid& dg, std::mt19937_64& rng, int band = 4) {
  require(band >= 1, "random_target_state: band must be >= 1");
  std::normal_distribution<double> nd;
  const auto& r = g.rect;
  const double tau = dg.tau;
  auto delay = [&] {
    std::vector<double> b(band * band);
    for (int n = 1; n <= band; ++n)
      for (int k = 0; k < band; ++k) b[(n - 1) * band + k] = nd(rng) / (n + k);
    return DelayField::sample(dg, [&](double x, double s) {
      double acc = 0.0;
      for (int n = 1; n <= band; ++n)
        for (int k = 0; k < band; ++k) acc += b[(n - 1) * band + k] * eval_phi_x(n, x, r) * std::cos(k * std::numbers::pi * s / tau);
      return acc * (1.0 - s / tau);
    });
  };
  TargetState st{Field2D(g), delay(), delay()};
  CoefficientGrid c(r, band, band);
  for (int n = 1; n <= band; ++n)
    for (int m = 1; m <= band; ++m) c.at(n, m) = nd(rng) / (n * m);
  const Field2D interior = synthesize_field(c, g);
  const auto ya = g.y_axis();
  for (int j = 0; j < g.ny; ++j) {
    const double y = ya.node(j);
    const double a = (y + r.l) / (2.0 * r.l), bb = (r.l - y) / (2.0 * r.l);
    for (int i = 0; i < g.nx; ++i) {
      double v = interior.at(i, j) + a * st.z1.at(i, 0) + bb * st.z2.at(i, 0);
      if (j == g.ny - 1) v = st.z1.at(i, 0);
      if (j == 0) v = st.z2.at(i, 0);
      st.w.at(i, j) = v;
    }
  }
  for (int j = 0; j < g.ny; ++j) st.w.at(0, j) = st.w.at(g.nx - 1, j) = 0.0;
  return st;
}

/// (||w||^2 + ||z1||_H1^2 + ||z2||_H1^2) / (||u||^2 + ||v1||_H1^2 + ||v2||_H1^2).
inline double norm_equivalence_ratio(const Field2D& u, const DelayField& v1, const DelayField& v2, const Field2D& w,
                                     const DelayField& z1, const DelayField& z2) {
  const double den = lyapunov_V2(u, v1, v2);
  require(den > 0.0, "norm_equivalence_ratio: zero original state");
  return lyapunov_V2(w, z1, z2) / den;
}

// ---------------------------------------------------------------- rate fitting

struct RateFit {
  double t0 = 0.0, t1 = 0.0;
  double rate = 0.0;       ///< beta in y ~ alpha e^{-beta t}; negative for growth
  double amplitude = 0.0;  ///< alpha
  double residual = 0.0;   ///< RMS of the log-linear fit residual
  int samples = 0;
};

inline RateFit fit_decay_rate(const std::vector<double>& t, const std::vector<double>& y, double t0, double t1) {
  require(t.size() == y.size(), "fit_decay_rate: size mismatch");
  require(t1 > t0, "fit_decay_rate: empty window");
  require(!t.empty() && t0 >= t.front() - 1e-12 && t1 <= t.back() + 1e-12, "fit_decay_rate: window outside the trajectory");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  const double eps = 1e-9 * (t1 - t0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t0 - eps || t[i] > t1 + eps) continue;
    require(std::isfinite(y[i]) && y[i] > 0.0, "fit_decay_rate: non-positive value in window");
    const double ly = std::log(y[i]);
    sx += t[i];
    sy += ly;
    sxx += t[i] * t[i];
    sxy += t[i] * ly;
    ++n;
  }
  require(n >= 2, "fit_decay_rate: fewer than two samples in window");
  const double den = n * sxx - sx * sx;
  const double slope = (n * sxy - sx * sy) / den;
  const double icpt = (sy - slope * sx) / n;
  double res = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t0 - eps || t[i] > t1 + eps) continue;
    const double d = std::log(y[i]) - (icpt + slope * t[i]);
    res += d * d;
  }
  return {t0, t1, -slope, std::exp(icpt), std::sqrt(res / n), n};
}

// ---------------------------------------------------------------- lemma bounds

enum class LemmaId { L3_VOLUME, L3_TRACE, L4_X_WEIGHTED, L5_EDGE };

inline const char* to_string(LemmaId id) {
  switch (id) {
    case LemmaId::L3_VOLUME: return "lemma3-volume";
    case LemmaId::L3_TRACE: return "lemma3-trace";
    case LemmaId::L4_X_WEIGHTED: return "lemma4-x-weighted";
    case LemmaId::L5_EDGE: return "lemma5-edge";
  }
  return "?";
}

inline LemmaId lemma_from_string(const std::string& s) {
  for (auto id : {LemmaId::L3_VOLUME, LemmaId::L3_TRACE, LemmaId::L4_X_WEIGHTED, LemmaId::L5_EDGE})
    if (s == to_string(id)) return id;
  throw ContractError("unknown lemma id '" + s + "'");
}

struct LemmaSetup {
  double lambda = 7.0;
  double tau = 1.0;
  RectangleSpec rect;
  int band_x = 6;  ///< random test functions use x-modes 1..band_x
  int band_y = 6;  ///< and y-modes 1..band_y
  int band_s = 4;  ///< cosine modes in s for delay-domain test functions
};

struct InequalityReport {
  LemmaId lemma = LemmaId::L3_VOLUME;
  int trials = 0;
  double max_ratio = 0.0;
  double min_ratio = 0.0;
  int violations = 0;  ///< trials with ratio above 1 + slack
  double slack = 1e-3;
  std::map<std::string, double> constants;
  bool passed() const { return violations == 0; }
};

namespace detail {

/// int_0^tau e^{k s} ds.
inline double exp_integral(double k, double tau) {
  if (std::abs(k * tau) < 1e-12) return tau;
  return std::expm1(k * tau) / k;
}

/// Composite Gauss-Legendre nodes on [a, b].
inline void composite_gl(double a, double b, int panels, std::vector<double>& x, std::vector<double>& w) {
  const auto& rule = unit_gauss16();
  x.clear();
  w.clear();
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p)
    for (std::size_t q = 0; q < rule.t.size(); ++q) {
      x.push_back(a + (p + rule.t[q]) * h);
      w.push_back(rule.w[q] * h);
    }
}

struct EdgeConstants {
  double M1, M2, M4;
};

inline EdgeConstants edge_constants(const ClosedFormKernel& p) {
  const double l = p.rect.l;
  const double M1 = closed_form_edge_norm_sq(1, p);
  const double M2 = integrate_gk([&](double xi) { const double v = closed_form_dxi(p, l, xi); return v * v; }, -l, l, 4);
  const double d = closed_form_dxi(p, l, l);
  return {M1, M2, d * d};
}

}  // namespace detail

/// Lemma bounds for the gamma_1 kernel, checked on random band-limited test functions.
/// LHS integrals are evaluated in coefficient space (Parseval in x and y); the bounds use
/// the constants produced by the proofs:
///   volume:      A1 = tau e^{2 lambda tau} ||p(l,.)||^2,         LHS <= A1 ||f||^2
///   trace:       B1 = tau e^{2 lambda tau} ||p_xi(l,.)||^2 l / 3, LHS <= B1 ||g||^2
///   x-weighted:  C11 = e^{2 lambda tau} ||p(l,.)||^2,             LHS <= C11 ||f_x||^2
///   edge:        G1 = p_xi(l,l)^2,                                LHS  = G1 ||g||^2
inline InequalityReport verify_lemma_bound(LemmaId id, const LemmaSetup& setup, int trials, std::uint64_t seed,
                                           double slack = 1e-3) {
  require(trials >= 0, "verify_lemma_bound: trials must be >= 0");
  require(setup.band_x >= 1 && setup.band_y >= 1 && setup.band_s >= 1, "verify_lemma_bound: bands must be >= 1");
  require(setup.lambda > 0.0 && setup.tau > 0.0, "verify_lemma_bound: lambda and tau must be > 0");
  setup.rect.validate();
  const double lam = setup.lambda, tau = setup.tau, L = setup.rect.L, l = setup.rect.l;
  const int Nb = setup.band_x, Mb = setup.band_y, Kb = setup.band_s;
  const ClosedFormKernel p{KernelForm::P, lam, setup.rect};
  const auto ec = detail::edge_constants(p);

  InequalityReport rep;
  rep.lemma = id;
  rep.trials = trials;
  rep.slack = slack;
  rep.min_ratio = trials > 0 ? 1e300 : 0.0;
  rep.constants["M1"] = ec.M1;
  rep.constants["M2"] = ec.M2;
  rep.constants["M4"] = ec.M4;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  auto record = [&](double lhs, double rhs) {
    const double ratio = rhs > 0.0 ? lhs / rhs : (lhs == 0.0 ? 0.0 : 1e300);
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    rep.min_ratio = std::min(rep.min_ratio, ratio);
    if (ratio > 1.0 + slack) ++rep.violations;
  };

  const double e2 = std::exp(2.0 * lam * tau);
  if (id == LemmaId::L3_VOLUME || id == LemmaId::L4_X_WEIGHTED) {
    const auto c = compute_pm_coeffs(1, p, Mb);
    const bool xw = id == LemmaId::L4_X_WEIGHTED;
    const double K = xw ? e2 * ec.M1 : tau * e2 * ec.M1;
    rep.constants[xw ? "C11" : "A1"] = K;
    std::vector<double> a(static_cast<std::size_t>(Nb) * Mb);
    for (int t = 0; t < trials; ++t) {
      for (auto& v : a) v = nd(rng);
      double lhs = 0.0, fsq = 0.0;
      for (int n = 1; n <= Nb; ++n) {
        const double mun = sine_eigenvalue(n, L);
        const double wn = xw ? mun * mun : 1.0;
        for (int m = 1; m <= Mb; ++m) {
          const double anm = a[(n - 1) * Mb + (m - 1)];
          fsq += (xw ? mun : 1.0) * anm * anm;
          for (int q = 1; q <= Mb; ++q) {
            const double k = 2.0 * (lam - mun) - sine_eigenvalue(m, l) - sine_eigenvalue(q, l);
            lhs += wn * c[m - 1] * c[q - 1] * anm * a[(n - 1) * Mb + (q - 1)] * detail::exp_integral(k, tau);
          }
        }
      }
      lhs *= L * l * l;
      fsq *= L * l;
      record(lhs, K * fsq);
    }
    return rep;
  }

  // Delay-domain test functions g(x, s) = sum_n phi_n(x) g_n(s), g_n = sum_k b_nk cos(k pi s / tau).
  std::vector<double> so, wo;
  detail::composite_gl(0.0, tau, 8, so, wo);
  std::vector<double> b(static_cast<std::size_t>(Nb) * Kb);
  auto gn = [&](int n, double s) {
    double acc = 0.0;
    for (int k = 0; k < Kb; ++k) acc += b[(n - 1) * Kb + k] * std::cos(k * std::numbers::pi * s / tau);
    return acc;
  };
  auto gsq = [&] {
    double acc = 0.0;
    for (int n = 1; n <= Nb; ++n)
      for (std::size_t i = 0; i < so.size(); ++i) acc += wo[i] * gn(n, so[i]) * gn(n, so[i]);
    return L * acc;
  };

  const SeriesKernel gamma1(SeriesKind::GAMMA1, lam, setup.rect, {Nb, Mb}, tau / 100.0);
  const BoundaryFlux flux(gamma1);

  if (id == LemmaId::L5_EDGE) {
    const double fp = flux.finite_part(Side::upper);
    rep.constants["G1"] = ec.M4;
    rep.constants["finite_part"] = fp;
    // ||g||^2 for the bound is taken by direct 2-D quadrature of g(x, s)^2.
    std::vector<double> xo, wx;
    detail::composite_gl(-L, L, std::max(4, Nb), xo, wx);
    for (int t = 0; t < trials; ++t) {
      for (auto& v : b) v = nd(rng);
      double direct = 0.0;
      for (std::size_t i = 0; i < xo.size(); ++i)
        for (std::size_t j = 0; j < so.size(); ++j) {
          double g = 0.0;
          for (int n = 1; n <= Nb; ++n) g += eval_phi_x(n, xo[i], setup.rect) * gn(n, so[j]);
          direct += wx[i] * wo[j] * g * g;
        }
      record(fp * fp * gsq(), ec.M4 * direct);
    }
    return rep;
  }

  // Trace term: conv_n(s) = int_0^s e^{(lambda - mu_n) rho} T(rho) g_n(s - rho) d rho, rho = s u^2.
  const double B = tau * e2 * ec.M2 * l / 3.0;
  rep.constants["B1"] = B;
  std::vector<double> ui, wi;
  detail::composite_gl(0.0, 1.0, 4, ui, wi);
  std::vector<double> tw(so.size() * ui.size());
  for (std::size_t j = 0; j < so.size(); ++j)
    for (std::size_t q = 0; q < ui.size(); ++q) {
      const double rho = so[j] * ui[q] * ui[q];
      tw[j * ui.size() + q] = 2.0 * so[j] * ui[q] * wi[q] * flux(Side::upper, rho);
    }
  for (int t = 0; t < trials; ++t) {
    for (auto& v : b) v = nd(rng);
    double lhs = 0.0;
    for (int n = 1; n <= Nb; ++n) {
      const double rate = lam - sine_eigenvalue(n, L);
      for (std::size_t j = 0; j < so.size(); ++j) {
        double conv = 0.0;
        for (std::size_t q = 0; q < ui.size(); ++q) {
          const double rho = so[j] * ui[q] * ui[q];
          conv += tw[j * ui.size() + q] * std::exp(rate * rho) * gn(n, so[j] - rho);
        }
        lhs += wo[j] * conv * conv;
      }
    }
    record(L * lhs, B * gsq());
  }
  return rep;
}

}  // namespace bs2d
