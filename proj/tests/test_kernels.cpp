#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "backstep2d/kernels.hpp"

using namespace bs2d;
using std::numbers::pi;

namespace {

double gk(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 12, 1e-12);
}

const RectangleSpec kUnit{};
const ClosedFormKernel kP{KernelForm::P, 7.0, kUnit};
const ClosedFormKernel kQ{KernelForm::Q, 7.0, kUnit};

/// Fixed-point iteration of G(a, b) = -lambda a / 4 + (lambda / 4) int_0^a int_0^b G on an
/// n x n trapezoid grid over [0, A] x [0, B]; returns G(A, B).
double goursat_fixed_point(double lambda, double A, double B, int n) {
  const double ha = A / n, hb = B / n;
  const int n1 = n + 1;
  std::vector<double> G(n1 * n1), C(n1 * n1), I(n1 * n1);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) G[i * n1 + j] = -lambda * i * ha / 4.0;
  for (int it = 0; it < 200; ++it) {
    for (int i = 0; i <= n; ++i) {
      C[i * n1] = 0.0;
      for (int j = 1; j <= n; ++j) C[i * n1 + j] = C[i * n1 + j - 1] + 0.5 * hb * (G[i * n1 + j - 1] + G[i * n1 + j]);
    }
    for (int j = 0; j <= n; ++j) I[j] = 0.0;
    for (int i = 1; i <= n; ++i)
      for (int j = 0; j <= n; ++j) I[i * n1 + j] = I[(i - 1) * n1 + j] + 0.5 * ha * (C[(i - 1) * n1 + j] + C[i * n1 + j]);
    double change = 0.0;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) {
        const double next = -lambda * i * ha / 4.0 + lambda / 4.0 * I[i * n1 + j];
        change = std::max(change, std::abs(next - G[i * n1 + j]));
        G[i * n1 + j] = next;
      }
    if (change < 1e-15) break;
  }
  return G[n * n1 + n];
}

SeriesKernel gamma1(Truncation t = {12, 16}, double s_min = 0.01) { return SeriesKernel(SeriesKind::GAMMA1, 7.0, kUnit, t, s_min); }

}  // namespace

// ---------------------------------------------------------------- Bessel ratio

TEST(Bessel, RatioMatchesStdBothBranches) {
  for (double w : {1e-3, 0.5, 7.0, 50.0, 143.9, 144.1, 300.0, 900.0}) {
    const double z = std::sqrt(w);
    const auto mi = bessel1_ratio(BesselKind::modified, w);
    const auto oj = bessel1_ratio(BesselKind::ordinary, w);
    EXPECT_NEAR(mi.f, std::cyl_bessel_i(1.0, z) / z, 1e-13 * std::cyl_bessel_i(1.0, z) / z) << w;
    EXPECT_NEAR(oj.f, std::cyl_bessel_j(1.0, z) / z, 1e-12) << w;
  }
  EXPECT_DOUBLE_EQ(bessel1_ratio(BesselKind::modified, 0.0).f, 0.5);
  EXPECT_THROW(bessel1_ratio(BesselKind::modified, -1.0), ContractError);
}

TEST(Bessel, DerivativesMatchFiniteDifferences) {
  for (auto kind : {BesselKind::modified, BesselKind::ordinary})
    for (double w : {0.3, 20.0, 150.0}) {
      const double h = 1e-4 * std::max(1.0, w);
      const auto c = bessel1_ratio(kind, w);
      const auto a = bessel1_ratio(kind, w + h), b = bessel1_ratio(kind, w - h);
      EXPECT_NEAR(c.df, (a.f - b.f) / (2 * h), 1e-7 * std::max(1.0, std::abs(c.df)));
      EXPECT_NEAR(c.d2f, (a.df - b.df) / (2 * h), 1e-7 * std::max(1.0, std::abs(c.d2f)));
    }
}

// ---------------------------------------------------------------- closed-form kernels

TEST(ClosedForm, DiagonalValues) {
  EXPECT_DOUBLE_EQ(eval_p(0.5, 0.5, kP), -1.75);
  EXPECT_EQ(eval_p(0.8, -0.8, kP), 0.0);
  EXPECT_DOUBLE_EQ(eval_q(0.5, 0.5, kQ), -1.75);
  EXPECT_EQ(eval_q(0.8, -0.8, kQ), 0.0);
  for (double y : {-1.0, -0.3, 0.2, 1.0}) EXPECT_DOUBLE_EQ(eval_p(y, y, kP), -3.5 * y);
}

TEST(ClosedForm, SuccessiveApproximationOracle) {
  // p(0.8, 0): characteristic coordinates a = y + xi = 0.8, b = y - xi = 0.8.
  const double coarse = goursat_fixed_point(7.0, 0.8, 0.8, 200);
  const double fine = goursat_fixed_point(7.0, 0.8, 0.8, 400);
  const double oracle = (4.0 * fine - coarse) / 3.0;
  EXPECT_NEAR(eval_p(0.8, 0.0, kP), oracle, 1e-6);
}

TEST(ClosedForm, SatisfiesKernelPde) {
  const double h = 1e-3;
  for (auto [y, xi] : {std::pair{0.7, 0.2}, std::pair{0.9, -0.5}, std::pair{-0.6, 0.1}}) {
    auto p = [&](double a, double b) { return eval_p(a, b, kP); };
    const double pyy = (p(y + h, xi) - 2 * p(y, xi) + p(y - h, xi)) / (h * h);
    const double pxx = (p(y, xi + h) - 2 * p(y, xi) + p(y, xi - h)) / (h * h);
    EXPECT_NEAR(pyy - pxx, 7.0 * p(y, xi), 1e-5);
    auto q = [&](double a, double b) { return eval_q(a, b, kQ); };
    const double qyy = (q(y + h, xi) - 2 * q(y, xi) + q(y - h, xi)) / (h * h);
    const double qxx = (q(y, xi + h) - 2 * q(y, xi) + q(y, xi - h)) / (h * h);
    EXPECT_NEAR(qyy - qxx, -7.0 * q(y, xi), 1e-5);
  }
}

TEST(ClosedForm, SmallLambdaQVanishes) {
  const ClosedFormKernel tiny{KernelForm::Q, 1e-12, kUnit};
  EXPECT_NEAR(eval_q(0.9, 0.3, tiny), 0.0, 1e-11);
}

TEST(ClosedForm, RejectsPointsOutsideDomain) {
  EXPECT_THROW(eval_p(0.2, 0.5, kP), ContractError);
  EXPECT_THROW(eval_p(1.2, 0.0, kP), ContractError);
  EXPECT_THROW((ClosedFormKernel{KernelForm::P, 0.0, kUnit}.validate()), ContractError);
}

TEST(ClosedForm, XiDerivativeMatchesFiniteDifference) {
  const double h = 1e-5;
  for (double xi : {-0.7, 0.0, 0.6}) {
    const double fd = (eval_p(1.0, xi + h, kP) - eval_p(1.0, xi - h, kP)) / (2 * h);
    EXPECT_NEAR(closed_form_dxi(kP, 1.0, xi), fd, 1e-6);
  }
  // p_xi(l, l) = -lambda/2 * F(0) + ... evaluates to 4.375 for lambda = 7 (lemma edge constant).
  EXPECT_NEAR(closed_form_dxi(kP, 1.0, 1.0), 4.375, 1e-12);
}

// ---------------------------------------------------------------- coefficients

TEST(Coefficients, MatchAdaptiveQuadrature) {
  const auto c = compute_pm_coeffs(1, kP, 40);
  double scale = 0.0;
  for (double v : c) scale = std::max(scale, std::abs(v));
  for (int m = 1; m <= 40; ++m) {
    const double ref = gk([&](double xi) { return eval_p(1.0, xi, kP) * eval_phi_y(m, xi, kUnit); }, -1.0, 1.0);
    EXPECT_NEAR(c[m - 1], ref, 1e-10 * scale) << m;
  }
  const auto c2 = compute_pm_coeffs(2, kP, 10);
  for (int m = 1; m <= 10; ++m) {
    const double ref = gk([&](double xi) { return eval_p(-1.0, xi, kP) * eval_phi_y(m, xi, kUnit); }, -1.0, 1.0);
    EXPECT_NEAR(c2[m - 1], ref, 1e-10 * scale);
    // p(-l, xi) = -p(l, -xi) gives p_2m = (-1)^m p_1m.
    EXPECT_NEAR(c2[m - 1], (m % 2 ? -1.0 : 1.0) * c[m - 1], 1e-10 * scale);
  }
}

TEST(Coefficients, SineCoefficientsOfSmoothFunction) {
  const auto c = detail::sine_coefficients([](double xi) { return std::exp(xi) * std::cos(3 * xi); }, kUnit, 60);
  for (int m : {1, 7, 30, 60}) {
    const double ref = gk([&](double xi) { return std::exp(xi) * std::cos(3 * xi) * eval_phi_y(m, xi, kUnit); }, -1.0, 1.0);
    EXPECT_NEAR(c[m - 1], ref, 1e-12);
  }
}

TEST(Coefficients, ParsevalIsMonotone) {
  // p(l, l) != 0, so p_1m ~ 1/m and the Parseval deficit after M modes decays like 1/M.
  const auto c = compute_pm_coeffs(1, kP, 400);
  const double norm = closed_form_edge_norm_sq(1, kP);
  double acc = 0.0, prev = 0.0, at200 = 0.0;
  for (std::size_t m = 0; m < c.size(); ++m) {
    acc += c[m] * c[m];
    EXPECT_GE(acc, prev);
    prev = acc;
    if (m + 1 == 200) at200 = acc;
  }
  EXPECT_LE(acc, norm * (1 + 1e-12));
  EXPECT_NEAR((norm - at200) / (norm - acc), 2.0, 0.05);
}

TEST(Coefficients, IntegrateGkFlagsUnresolvedIntegrand) {
  EXPECT_THROW(integrate_gk([](double x) { return 1.0 / x; }, 0.0, 1.0, 1, 1e-12), QuadratureError);
  EXPECT_NEAR(integrate_gk([](double x) { return std::sin(x); }, 0.0, pi), 2.0, 1e-12);
}

// ---------------------------------------------------------------- series kernels

TEST(Series, TailRuleIsMinimal) {
  const auto probe = compute_pm_coeffs(1, kP, kCoefficientProbe);
  double sum = 0.0;
  for (double v : probe) sum += std::abs(v);
  const int n = tail_rule_modes(0.01, 1.0, sum, kTailTolerance);
  EXPECT_LT(std::exp(-sine_eigenvalue(n, 1.0) * 0.01) * sum, kTailTolerance);
  EXPECT_GE(std::exp(-sine_eigenvalue(n - 1, 1.0) * 0.01) * sum, kTailTolerance);
  const auto k = SeriesKernel::with_tail_rule(SeriesKind::GAMMA1, 7.0, kUnit, 0.01);
  EXPECT_EQ(k.N(), n);
  EXPECT_EQ(k.M(), n);
}

TEST(Series, TailRuleRespectsCap) {
  const auto k = SeriesKernel::with_tail_rule(SeriesKind::GAMMA1, 7.0, kUnit, 0.01, kTailTolerance, 20, 10);
  EXPECT_EQ(k.N(), 20);
  EXPECT_EQ(k.M(), 10);
  EXPECT_EQ(k.coeffs().size(), 10u);
}

TEST(Series, FactoredEqualsDirectDoubleSum) {
  const auto k = gamma1();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0), us(0.01, 1.0);
  for (int t = 0; t < 10; ++t) {
    const double x = u(rng), th = u(rng), s = us(rng), xi = u(rng);
    double direct = 0.0;
    for (int n = 1; n <= k.N(); ++n)
      for (int m = 1; m <= k.M(); ++m)
        direct += std::exp(7.0 * s) * std::exp(-(n * n + m * m) * pi * pi * s / 4.0) * std::sin(n * pi * (x + 1) / 2) *
                  std::sin(n * pi * (th + 1) / 2) * k.coeffs()[m - 1] * std::sin(m * pi * (xi + 1) / 2);
    EXPECT_NEAR(eval_gamma(k, x, th, s, xi), direct, 1e-13 * std::max(1.0, std::abs(direct)));
  }
}

TEST(Series, MirrorSymmetry) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0), us(0.01, 1.0);
  for (auto [a, b] : {std::pair{SeriesKind::GAMMA1, SeriesKind::GAMMA2}, std::pair{SeriesKind::ETA1, SeriesKind::ETA2}}) {
    const SeriesKernel k1(a, 7.0, kUnit, {20, 20}, 0.01), k2(b, 7.0, kUnit, {20, 20}, 0.01);
    for (int t = 0; t < 10; ++t) {
      const double x = u(rng), th = u(rng), s = us(rng), xi = u(rng);
      const double v1 = eval_gamma(k1, x, th, s, -xi);
      EXPECT_NEAR(eval_gamma(k2, x, th, s, xi), v1, 1e-10 * std::max(1.0, std::abs(v1)));
    }
  }
}

TEST(Series, BoundaryAnnihilationIsExact) {
  const auto k = gamma1();
  for (double s : {0.01, 0.3, 1.0})
    for (double v : {-0.7, 0.1, 0.9}) {
      EXPECT_EQ(eval_gamma(k, v, 1.0, s, 0.3), 0.0);
      EXPECT_EQ(eval_gamma(k, v, -1.0, s, 0.3), 0.0);
      EXPECT_EQ(eval_gamma(k, v, 0.2, s, 1.0), 0.0);
      EXPECT_EQ(eval_gamma(k, v, 0.2, s, -1.0), 0.0);
      EXPECT_EQ(eval_gamma_xi_trace(k, 1.0, v, s, Side::upper), 0.0);
      EXPECT_EQ(eval_gamma_xi_trace(k, -1.0, v, s, Side::lower), 0.0);
    }
}

TEST(Series, RejectsTimesBelowSmin) {
  const auto k = gamma1();
  EXPECT_THROW(eval_gamma(k, 0.0, 0.0, 0.005, 0.0), ContractError);
  EXPECT_THROW(eval_gamma_xi_trace(k, 0.0, 0.0, 0.0, Side::upper), ContractError);
}

TEST(Series, TraceMatchesFiniteDifferenceAtSecondOrder) {
  const auto k = gamma1({10, 24});
  const double x = 0.3, th = -0.2, s = 0.4;
  const double exact = eval_gamma_xi_trace(k, x, th, s, Side::upper);
  double prev = 0.0;
  for (double h : {0.04, 0.02, 0.01}) {
    const double xi = 1.0 - h;
    const double fd = (eval_gamma(k, x, th, s, xi + h) - eval_gamma(k, x, th, s, xi - h)) / (2 * h);
    const double err = std::abs(fd - exact);
    if (prev > 0.0) {
      EXPECT_NEAR(prev / err, 4.0, 0.5);
    }
    prev = err;
  }
}

TEST(Series, TraceBoundAtLargeTime) {
  // |trace| <= e^{(lambda - mu_1) s} N sum_m |c_m| |varphi_m'(l)| / L with mu_1 = pi^2/4.
  const SeriesKernel k(SeriesKind::GAMMA1, 3.0, kUnit, {20, 20}, 0.01);
  double C = 0.0;
  for (int m = 1; m <= 20; ++m) C += std::abs(k.coeffs()[m - 1]) * m * pi / 2.0;
  C *= 20.0;  // sum over n of |phi_n phi_n| <= N
  const double s = 1.0;
  for (double x : {-0.5, 0.0, 0.5})
    EXPECT_LE(std::abs(eval_gamma_xi_trace(k, x, 0.1, s, Side::upper)), std::exp((3.0 - pi * pi / 4) * s) * C);
}

TEST(Series, TraceTensorMatchesPointwise) {
  const auto k = gamma1();
  const UniformAxis ax(-1.0, 1.0, 21);
  const auto T = precompute_trace_tensor(k, ax, 0.01, 100, Side::upper);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> ui(0, 20), uj(1, 100);
  for (int t = 0; t < 20; ++t) {
    const int ix = ui(rng), it = ui(rng), j = uj(rng);
    EXPECT_EQ(T.value(ix, it, j), eval_gamma_xi_trace(k, ax.node(ix), ax.node(it), j * 0.01, Side::upper));
  }
  const SeriesKernel k2(SeriesKind::GAMMA2, 7.0, kUnit, {12, 16}, 0.01);
  const auto T2 = precompute_trace_tensor(k2, ax, 0.01, 100, Side::upper);
  const auto T1 = precompute_trace_tensor(k, ax, 0.01, 100, Side::lower);
  for (int j : {1, 50, 100}) EXPECT_NEAR(T2.value(3, 8, j), -T1.value(3, 8, j), 1e-10 * std::abs(T1.value(3, 8, j)) + 1e-14);
  const auto Z = precompute_trace_tensor(k.with_coeffs(std::vector<double>(16, 0.0)), ax, 0.01, 10, Side::upper);
  EXPECT_EQ(Z.value(4, 5, 3), 0.0);
  EXPECT_THROW(precompute_trace_tensor(k, ax, 0.01, 100, Side::upper, 64), MemoryBudgetError);
}

TEST(Series, PdeResidualOrder) {
  const std::vector<ResidualProbe> probes{{0.3, -0.2, 0.4}, {-0.5, 0.1, -0.6}};
  const std::vector<double> s{0.05, 0.1, 0.25, 0.5, 1.0};
  for (auto kind : {SeriesKind::GAMMA1, SeriesKind::ETA1}) {
    const auto k = SeriesKernel::with_tail_rule(kind, 7.0, kUnit, 0.01);
    const auto r = kernel_pde_residual(k, probes, s, 0.02);
    EXPECT_GE(r.order, 1.8) << to_string(kind);
    EXPECT_LT(r.residual_richardson, 0.2 * r.residual_fine);
  }
  const auto single = gamma1({1, 1});
  const auto r1 = kernel_pde_residual(single, probes, s, 0.02);
  EXPECT_LT(r1.residual_richardson, 1e-6 * r1.scale);
  EXPECT_THROW(kernel_pde_residual(single, {{0.0, 0.99, 0.0}}, s, 0.02), ContractError);
}

TEST(Series, WeakLimitDecreases) {
  const auto k = SeriesKernel::with_tail_rule(SeriesKind::GAMMA1, 7.0, kUnit, 0.005);
  const std::vector<double> s{0.1, 0.05, 0.02, 0.01, 0.005};
  auto f = [](double t) { return eval_phi_x(1, t, kUnit); };
  auto g = [](double xi) { return eval_phi_y(1, xi, kUnit); };
  const auto e = weak_limit_test(k, f, g, 0.0, s);
  for (std::size_t i = 1; i < e.size(); ++i) EXPECT_LT(e[i], e[i - 1]);
  // Error is first order in s: the limit is approached as e^{(lambda - mu_1) s} * (...).
  EXPECT_NEAR(std::log(e[3] / e[4]) / std::log(2.0), 1.0, 0.1);

  const auto zero = weak_limit_test(k, [](double) { return 0.0; }, g, 0.0, s);
  for (double v : zero) EXPECT_EQ(v, 0.0);

  // g orthogonal to p(l, .): limit 0 and the errors still shrink.
  const double pp = closed_form_edge_norm_sq(1, kP);
  const double gp = gk([&](double xi) { return eval_p(1.0, xi, kP) * g(xi); }, -1.0, 1.0);
  auto g_perp = [&](double xi) { return g(xi) - gp / pp * eval_p(1.0, xi, kP); };
  const auto ep = weak_limit_test(k, f, g_perp, 0.0, s);
  EXPECT_LT(ep.back(), ep.front());
  EXPECT_THROW(weak_limit_test(k, f, g, 0.0, {0.01, 0.02}), ContractError);
}

// ---------------------------------------------------------------- boundary flux

TEST(BoundaryFluxTest, MatchesLongSeriesAwayFromZero) {
  const auto k = SeriesKernel(SeriesKind::GAMMA1, 7.0, kUnit, {10, 400}, 0.001);
  const BoundaryFlux F(k);
  for (double rho : {0.02, 0.1, 0.5})
    for (auto side : {Side::upper, Side::lower}) {
      const double ref = truncated_edge_flux(k, rho, side);
      EXPECT_NEAR(F(side, rho), ref, 1e-8 * std::max(1.0, std::abs(ref))) << rho;
    }
}

TEST(BoundaryFluxTest, FinitePartIsProfileSlope) {
  const auto k = SeriesKernel(SeriesKind::GAMMA1, 7.0, kUnit, {4, 4}, 0.01);
  const BoundaryFlux F(k);
  EXPECT_NEAR(F.finite_part(Side::upper), k.profile_dxi(1.0), 1e-7);
  EXPECT_NEAR(F.finite_part(Side::lower), k.profile_dxi(-1.0), 1e-7);
  // T(rho) - c/sqrt(rho) approaches the finite part.
  const double rho = 1e-6;
  EXPECT_NEAR(F(Side::upper, rho) - F.singular_coefficient(Side::upper) / std::sqrt(rho), F.finite_part(Side::upper), 1e-2);
}
