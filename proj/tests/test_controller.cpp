#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "backstep2d/analysis.hpp"
#include "backstep2d/controller.hpp"

using namespace bs2d;
using std::numbers::pi;

namespace {

const RectangleSpec kUnit{};
constexpr double kLambda = 7.0, kTau = 0.5, kDt = 0.01;
const Grid2D kGrid{kUnit, 21, 41};
const DelayGrid kDelay{1.0, kTau, 21, 50};

const ControllerGains& gains() {
  static const ControllerGains G = make_controller_gains(kLambda, kGrid, kTau, kDt);
  return G;
}

Field2D mode11() {
  return Field2D::sample(kGrid, [](double x, double y) { return eval_phi_x(1, x, kUnit) * eval_phi_y(1, y, kUnit); });
}

ControlHistory empty_history() {
  const DelayField zero(kDelay);
  return ControlHistory::from_initial(gains().x_table(), zero, zero, kDt);
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST(Controller, ZeroStateGivesZeroInput) {
  const auto U = compute_U(Field2D(kGrid), empty_history(), gains(), 0.0);
  EXPECT_EQ(max_abs(U.U1), 0.0);
  EXPECT_EQ(max_abs(U.U2), 0.0);
}

TEST(Controller, SingleModeVolumeFeedback) {
  const double p11 = compute_pm_coeffs(1, ClosedFormKernel{KernelForm::P, kLambda, kUnit}, 1)[0];
  const double amp = std::exp((kLambda - pi * pi / 2) * kTau) * p11;
  const auto U = volume_feedback(mode11(), gains());
  const auto xa = kGrid.x_axis();
  for (int i = 0; i < kGrid.nx; ++i) {
    EXPECT_NEAR(U.U1[i], amp * eval_phi_x(1, xa.node(i), kUnit), 1e-10 * std::abs(amp));
    EXPECT_NEAR(U.U2[i], amp * eval_phi_x(1, xa.node(i), kUnit), 1e-10 * std::abs(amp));
  }
}

TEST(Controller, GainSpectrumMatchesClosedForm) {
  const auto c = compute_pm_coeffs(1, ClosedFormKernel{KernelForm::P, kLambda, kUnit}, 4);
  const auto spec = closed_loop_gain_spectrum(gains(), 4);
  ASSERT_EQ(spec.size(), static_cast<std::size_t>(4 * gains().modes()));
  for (const auto& e : spec) {
    if (e.n > 3) continue;
    const double want = std::exp((kLambda - sine_eigenvalue(e.n, 1.0) - sine_eigenvalue(e.m, 1.0)) * kTau) * std::abs(c[e.m - 1]);
    EXPECT_NEAR(e.gain1, want, 1e-10 * std::max(want, 1e-3)) << e.n << ',' << e.m;
    EXPECT_NEAR(e.gain2, want, 1e-10 * std::max(want, 1e-3)) << e.n << ',' << e.m;
  }
  EXPECT_THROW(closed_loop_gain_spectrum(gains(), 0), ContractError);
}

TEST(Controller, InputIsLinearInStateAndHistory) {
  std::mt19937_64 rng(8);
  const auto a = random_target_state(kGrid, kDelay, rng);
  const auto b = random_target_state(kGrid, kDelay, rng);
  const double ca = 0.7, cb = -1.3;
  Field2D u(kGrid);
  DelayField h1(kDelay), h2(kDelay);
  for (std::size_t i = 0; i < u.data().size(); ++i) u.data()[i] = ca * a.w.data()[i] + cb * b.w.data()[i];
  for (std::size_t i = 0; i < h1.data().size(); ++i) {
    h1.data()[i] = ca * a.z1.data()[i] + cb * b.z1.data()[i];
    h2.data()[i] = ca * a.z2.data()[i] + cb * b.z2.data()[i];
  }
  const auto& tx = gains().x_table();
  const auto Ua = compute_U(a.w, ControlHistory::from_initial(tx, a.z1, a.z2, kDt), gains(), 0.0);
  const auto Ub = compute_U(b.w, ControlHistory::from_initial(tx, b.z1, b.z2, kDt), gains(), 0.0);
  const auto U = compute_U(u, ControlHistory::from_initial(tx, h1, h2, kDt), gains(), 0.0);
  const double scale = std::max(max_abs(Ua.U1), max_abs(Ub.U1));
  for (int i = 0; i < kGrid.nx; ++i) {
    EXPECT_NEAR(U.U1[i], ca * Ua.U1[i] + cb * Ub.U1[i], 1e-12 * scale);
    EXPECT_NEAR(U.U2[i], ca * Ua.U2[i] + cb * Ub.U2[i], 1e-12 * scale);
  }
}

TEST(Controller, InputVanishesAtSideWalls) {
  const auto U = compute_U(mode11(), empty_history(), gains(), 0.0);
  EXPECT_EQ(U.U1.front(), 0.0);
  EXPECT_EQ(U.U1.back(), 0.0);
  EXPECT_EQ(U.U2.front(), 0.0);
  EXPECT_EQ(U.U2.back(), 0.0);
}

TEST(Controller, EndpointSystemIsSolved) {
  // U(t) enters its own history integrals through the rho = 0 weight; the returned modes must
  // satisfy c = Vol - (w_up^+ c1 - w_lo^+ c2) row by row.
  const auto& G = gains();
  const auto U = compute_U(mode11(), empty_history(), G, 0.0);
  const auto c1 = G.x_table().analyze(U.U1), c2 = G.x_table().analyze(U.U2);
  std::vector<double> v1(G.modes()), v2(G.modes());
  const auto um = field_x_modes(mode11(), G.x_table());
  G.kernels().op1.volume_modes(um, G.window(), v1);
  G.kernels().op2.volume_modes(um, G.window(), v2);
  const int S = G.window();
  for (int n = 1; n <= 3; ++n) {
    const auto& K = G.kernels();
    const double r1 = v1[n - 1] - (K.op1.trace_weight(Side::upper, n, 0, S) * c1[n - 1] - K.op1.trace_weight(Side::lower, n, 0, S) * c2[n - 1]);
    const double r2 = v2[n - 1] - (K.op2.trace_weight(Side::upper, n, 0, S) * c1[n - 1] - K.op2.trace_weight(Side::lower, n, 0, S) * c2[n - 1]);
    EXPECT_NEAR(c1[n - 1], r1, 1e-12 * std::max(1.0, std::abs(r1)));
    EXPECT_NEAR(c2[n - 1], r2, 1e-12 * std::max(1.0, std::abs(r2)));
  }
}

TEST(Controller, InputZeroesTransformedStateAtDelayEnd) {
  // With v_i(x, tau) = U_i(0), the forward transform must give z_i(x, tau) = 0.
  std::mt19937_64 rng(21);
  const auto st = random_target_state(kGrid, kDelay, rng);
  DelayField v1 = st.z1, v2 = st.z2;
  const auto U = compute_U(st.w, ControlHistory::from_initial(gains().x_table(), v1, v2, kDt), gains(), 0.0);
  const int S = kDelay.ns;
  for (int i = 0; i < kGrid.nx; ++i) {
    v1.at(i, S) = U.U1[i];
    v2.at(i, S) = U.U2[i];
  }
  const auto K = make_forward_kernels(kLambda, kGrid, kDelay);
  const auto z1 = forward_z(1, v1, v2, st.w, K), z2 = forward_z(2, v1, v2, st.w, K);
  const double scale = std::max(max_abs(U.U1), max_abs(U.U2));
  for (int i = 0; i < kGrid.nx; ++i) {
    EXPECT_NEAR(z1.at(i, S), 0.0, 1e-11 * scale);
    EXPECT_NEAR(z2.at(i, S), 0.0, 1e-11 * scale);
  }
}

TEST(ControlHistoryTest, RingAndTimeChecks) {
  const auto& tx = gains().x_table();
  DelayField v(kDelay);
  for (int k = 0; k <= kDelay.ns; ++k)
    for (int i = 0; i < kDelay.nx; ++i) v.at(i, k) = k;
  auto h = ControlHistory::from_initial(tx, v, v, kDt);
  EXPECT_EQ(h.size(), static_cast<std::size_t>(kDelay.ns));
  EXPECT_NEAR(h.latest_time(), -kDt, 1e-12);
  EXPECT_EQ(h.row(1, 0)[3], kDelay.ns - 1.0);
  EXPECT_EQ(h.row(2, kDelay.ns - 1)[3], 0.0);
  const std::vector<double> r(kDelay.nx, 5.0);
  EXPECT_THROW(h.push(r, r, 0.5), ContractError);
  h.push(r, r, 0.0);
  h.push(r, r, kDt);
  EXPECT_EQ(h.size(), static_cast<std::size_t>(kDelay.ns + 1));
  EXPECT_EQ(h.row(1, kDelay.ns)[0], 1.0);
  EXPECT_THROW(h.row(1, kDelay.ns + 1), ContractError);
  std::vector<double> bad = r;
  bad[2] = std::nan("");
  EXPECT_THROW(h.push(bad, r, 2 * kDt), ContractError);
}

TEST(ControlHistoryTest, StaleHistoryRejected) {
  EXPECT_THROW(compute_U(mode11(), empty_history(), gains(), 0.3), ContractError);
  EXPECT_THROW(make_controller_gains(kLambda, kGrid, kTau, 0.03), ContractError);
}
