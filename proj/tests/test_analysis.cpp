#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "backstep2d/backstep2d.hpp"

using namespace bs2d;
using std::numbers::pi;

namespace {

const RectangleSpec kUnit{};

}  // namespace

TEST(RateFit, RecoversExponential) {
  std::vector<double> t, y;
  for (int k = 0; k <= 300; ++k) {
    t.push_back(0.01 * k);
    y.push_back(3.0 * std::exp(-3.0 * t.back()));
  }
  const auto f = fit_decay_rate(t, y, 1.0, 2.5);
  EXPECT_NEAR(f.rate, 3.0, 1e-10);
  EXPECT_NEAR(f.amplitude, 3.0, 1e-9);
  EXPECT_LT(f.residual, 1e-12);
  EXPECT_EQ(f.samples, 151);
  for (auto& v : y) v = 1.0 / v;
  EXPECT_NEAR(fit_decay_rate(t, y, 0.0, 3.0).rate, -3.0, 1e-10);
}

TEST(RateFit, RejectsBadWindows) {
  const std::vector<double> t{0.0, 0.5, 1.0}, y{1.0, 0.5, 0.0};
  EXPECT_THROW(fit_decay_rate(t, y, 0.0, 1.0), ContractError);
  EXPECT_THROW(fit_decay_rate(t, {1.0, 0.5, 0.2}, 0.0, 2.0), ContractError);
  EXPECT_THROW(fit_decay_rate(t, {1.0, 0.5, 0.2}, 0.6, 0.9), ContractError);
  EXPECT_THROW(fit_decay_rate(t, {1.0, 0.5}, 0.0, 1.0), ContractError);
}

TEST(Lyapunov, ZeroAndSingleModeStates) {
  const Grid2D g{kUnit, 41, 41};
  const DelayGrid dg{1.0, 1.0, 41, 40};
  const LyapunovParams p;
  EXPECT_EQ(lyapunov_V2(Field2D(g), DelayField(dg), DelayField(dg)), 0.0);
  EXPECT_EQ(lyapunov_V1(Field2D(g), DelayField(dg), DelayField(dg), p), 0.0);
  const auto w = Field2D::sample(g, [](double x, double y) { return eval_phi_x(1, x, kUnit) * eval_phi_y(1, y, kUnit); });
  EXPECT_NEAR(lyapunov_V2(w, DelayField(dg), DelayField(dg)), 1.0, 1e-12);
  EXPECT_THROW(lyapunov_V2(w, DelayField(dg), DelayField(DelayGrid{1.0, 1.0, 41, 20})), ContractError);
  EXPECT_THROW((LyapunovParams{0.0, {1, 1, 1, 1}}.validate()), ContractError);
}

TEST(Lyapunov, WeightedDelayNormClosedForm) {
  // z = phi_1(x), constant in s: int_0^tau e^{bs} ds * (L + L mu_1).
  const double b = 0.7, tau = 1.0;
  const double exact = std::expm1(b * tau) / b * (1.0 + pi * pi / 4);
  double prev = 0.0;
  for (int n : {101, 201, 401}) {
    const DelayGrid dg{1.0, tau, n, n - 1};
    const auto z = DelayField::sample(dg, [](double x, double) { return eval_phi_x(1, x, kUnit); });
    const double err = std::abs(weighted_H1_sq(z, b) - exact);
    EXPECT_LT(err, 5e-4 * exact);
    if (prev > 0.0) {
      EXPECT_NEAR(prev / err, 4.0, 0.3);
    }
    prev = err;
  }
}

TEST(Lyapunov, SandwichHoldsOnRandomStates) {
  const Grid2D g{kUnit, 41, 41};
  const DelayGrid dg{1.0, 1.0, 41, 100};
  const LyapunovParams p;
  std::mt19937_64 rng(42);
  double lo = 1e300, hi = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto st = random_target_state(g, dg, rng);
    const auto s = lyapunov_sandwich(st.w, st.z1, st.z2, p);
    EXPECT_TRUE(s.lower_ok());
    EXPECT_TRUE(s.upper_ok());
    lo = std::min(lo, s.V1 / s.V2);
    hi = std::max(hi, s.V1 / s.V2);
  }
  EXPECT_GE(lo, 0.25);
  EXPECT_LE(hi, 3.0 + std::exp(1.0));
}

TEST(Lyapunov, MuFeasibility) {
  const auto f = LyapunovParams{}.feasibility(kUnit);
  EXPECT_NEAR(f.dissipation_margin, -5.25, 1e-12);
  EXPECT_NEAR(f.edge_margin, 1.0 - 16.0 / 3.0, 1e-12);
  EXPECT_FALSE(f.feasible());
  const auto thin = LyapunovParams{1.0, {1.0, 1.0, 1.0, 1.0}}.feasibility(RectangleSpec{1.0, 0.3});
  EXPECT_NEAR(thin.dissipation_margin, 1.0 / 0.18 - 2.0, 1e-12);
  EXPECT_NEAR(thin.edge_margin, 0.2, 1e-12);
  EXPECT_TRUE(thin.feasible());
}

TEST(Lemmas, BoundsHoldOnRandomFunctions) {
  LemmaSetup s;
  for (auto id : {LemmaId::L3_VOLUME, LemmaId::L3_TRACE, LemmaId::L4_X_WEIGHTED}) {
    const auto r = verify_lemma_bound(id, s, 40, 7);
    EXPECT_TRUE(r.passed()) << to_string(id) << " max ratio " << r.max_ratio;
    EXPECT_GT(r.min_ratio, 0.0);
    EXPECT_LE(r.max_ratio, 1.0);
  }
}

TEST(Lemmas, EdgeIdentityAndConstants) {
  LemmaSetup s;
  const auto r = verify_lemma_bound(LemmaId::L5_EDGE, s, 20, 3);
  EXPECT_NEAR(r.max_ratio, 1.0, 1e-6);
  EXPECT_NEAR(r.min_ratio, 1.0, 1e-6);
  EXPECT_NEAR(r.constants.at("G1"), 4.375 * 4.375, 1e-9);
  EXPECT_NEAR(r.constants.at("finite_part"), 4.375, 1e-7);
  const ClosedFormKernel p{KernelForm::P, 7.0, kUnit};
  EXPECT_NEAR(r.constants.at("M1"), closed_form_edge_norm_sq(1, p), 1e-12);
}

TEST(Lemmas, ZeroTrialsAndIds) {
  const auto r = verify_lemma_bound(LemmaId::L3_VOLUME, LemmaSetup{}, 0, 1);
  EXPECT_EQ(r.trials, 0);
  EXPECT_TRUE(r.passed());
  for (auto id : {LemmaId::L3_VOLUME, LemmaId::L3_TRACE, LemmaId::L4_X_WEIGHTED, LemmaId::L5_EDGE})
    EXPECT_EQ(lemma_from_string(to_string(id)), id);
  EXPECT_THROW(lemma_from_string("lemma9"), ContractError);
  LemmaSetup bad;
  bad.band_x = 0;
  EXPECT_THROW(verify_lemma_bound(LemmaId::L3_VOLUME, bad, 1, 1), ContractError);
}

TEST(Lemmas, ExpIntegral) {
  EXPECT_NEAR(detail::exp_integral(2.0, 1.5), (std::exp(3.0) - 1.0) / 2.0, 1e-12);
  EXPECT_EQ(detail::exp_integral(0.0, 1.5), 1.5);
  EXPECT_NEAR(detail::exp_integral(-1e-14, 1.0), 1.0, 1e-13);
}

TEST(NormEquivalence, ZeroOriginalRejected) {
  const Grid2D g{kUnit, 11, 11};
  const DelayGrid dg{1.0, 1.0, 11, 10};
  EXPECT_THROW(norm_equivalence_ratio(Field2D(g), DelayField(dg), DelayField(dg), Field2D(g), DelayField(dg), DelayField(dg)),
               ContractError);
}
