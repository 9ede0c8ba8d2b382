#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "basis.hpp"
#include "grid.hpp"
#include "kernel_operator.hpp"
#include "kernels.hpp"
#include "transforms.hpp"

namespace bs2d {

/// Ring of past boundary inputs (U1, U2) on the x-grid, one row per time step, with
/// cached x-mode coefficients. Holds at most S + 1 rows.
class ControlHistory {
 public:
  ControlHistory() = default;
  ControlHistory(const SineTable& tx, int S, double dt) : tx_(tx), S_(S), dt_(dt), cap_(S + 1) {
    require(S >= 1 && dt > 0.0, "ControlHistory: invalid window");
    const std::size_t nx = tx.size(), N = tx.modes();
    u1_.assign(cap_ * nx, 0.0);
    u2_.assign(cap_ * nx, 0.0);
    m1_.assign(cap_ * N, 0.0);
    m2_.assign(cap_ * N, 0.0);
    t_.assign(cap_, 0.0);
  }

  /// Rows U_i(x, -tau + d dt) := v_i0(x, d ds), d = 0..S-1.
  static ControlHistory from_initial(const SineTable& tx, const DelayField& v10, const DelayField& v20, double dt) {
    require(v10.grid() == v20.grid(), "ControlHistory: initial delay fields on different grids");
    const int S = v10.ns();
    require(std::abs(v10.grid().ds() - dt) <= 1e-12 * dt, "ControlHistory: ds must equal dt");
    ControlHistory h(tx, S, dt);
    for (int d = 0; d < S; ++d) h.push(v10.row(d), v20.row(d), -v10.grid().tau + d * dt);
    return h;
  }

  void push(std::span<const double> U1, std::span<const double> U2, double t) {
    const std::size_t nx = tx_.size(), N = tx_.modes();
    require(U1.size() == nx && U2.size() == nx, "ControlHistory::push: row length mismatch");
    for (double v : U1) require(std::isfinite(v), "ControlHistory::push: non-finite input");
    for (double v : U2) require(std::isfinite(v), "ControlHistory::push: non-finite input");
    if (count_ > 0) require(std::abs(t - latest_time() - dt_) <= 1e-9 * dt_ + 1e-12, "ControlHistory::push: time step mismatch");
    const std::size_t slot = head_;
    std::copy(U1.begin(), U1.end(), u1_.begin() + slot * nx);
    std::copy(U2.begin(), U2.end(), u2_.begin() + slot * nx);
    tx_.analyze(U1, std::span<double>(&m1_[slot * N], N));
    tx_.analyze(U2, std::span<double>(&m2_[slot * N], N));
    t_[slot] = t;
    head_ = (head_ + 1) % cap_;
    count_ = std::min(count_ + 1, cap_);
  }

  std::size_t size() const { return count_; }
  int window() const { return S_; }
  double dt() const { return dt_; }
  double latest_time() const {
    require(count_ > 0, "ControlHistory: empty");
    return t_[(head_ + cap_ - 1) % cap_];
  }

  /// Row pushed `back` steps before the latest (back = 0 is the latest).
  std::span<const double> row(int i, std::size_t back) const { return slice(i == 1 ? u1_ : u2_, back, tx_.size()); }
  std::span<const double> modes(int i, std::size_t back) const { return slice(i == 1 ? m1_ : m2_, back, tx_.modes()); }
  double time(std::size_t back) const {
    require(back < count_, "ControlHistory: index beyond stored window");
    return t_[(head_ + cap_ - 1 - back) % cap_];
  }
  const SineTable& x_table() const { return tx_; }

 private:
  std::span<const double> slice(const std::vector<double>& buf, std::size_t back, std::size_t width) const {
    require(back < count_, "ControlHistory: index beyond stored window");
    const std::size_t slot = (head_ + cap_ - 1 - back) % cap_;
    return {buf.data() + slot * width, width};
  }

  SineTable tx_;
  int S_ = 0;
  double dt_ = 0.0;
  std::size_t cap_ = 0, head_ = 0, count_ = 0;
  std::vector<double> u1_, u2_, m1_, m2_, t_;
};

/// Cached controller data: the gamma_1/gamma_2 operators evaluated at s = tau plus the
/// per-mode 2x2 systems coupling U(t) to itself through the rho -> 0 end of the history
/// integrals.
class ControllerGains {
 public:
  ControllerGains() = default;
  explicit ControllerGains(TransformKernels gamma) : K_(std::move(gamma)) {
    require(is_gamma(K_.op1.kind()) && is_gamma(K_.op2.kind()), "ControllerGains: expects gamma kernels");
    const int N = K_.op1.modes(), S = K_.op1.s_intervals();
    require(K_.op2.modes() == N && K_.op2.s_intervals() == S, "ControllerGains: kernel operators disagree");
    const double sg = sign_value(K_.sign);
    inv_.resize(4 * static_cast<std::size_t>(N));
    for (int n = 1; n <= N; ++n) {
      const double a11 = 1.0 + sg * K_.op1.trace_weight(Side::upper, n, 0, S);
      const double a12 = -sg * K_.op1.trace_weight(Side::lower, n, 0, S);
      const double a21 = sg * K_.op2.trace_weight(Side::upper, n, 0, S);
      const double a22 = 1.0 - sg * K_.op2.trace_weight(Side::lower, n, 0, S);
      const double det = a11 * a22 - a12 * a21;
      require(std::abs(det) > 1e-12, "ControllerGains: singular endpoint system");
      double* q = &inv_[4 * static_cast<std::size_t>(n - 1)];
      q[0] = a22 / det;
      q[1] = -a12 / det;
      q[2] = -a21 / det;
      q[3] = a11 / det;
    }
  }

  const TransformKernels& kernels() const { return K_; }
  int modes() const { return K_.op1.modes(); }
  int window() const { return K_.op1.s_intervals(); }
  double dt() const { return K_.op1.delay_grid().ds(); }
  const SineTable& x_table() const { return K_.op1.x_table(); }
  /// Inverse of the endpoint 2x2 system of mode n, row-major.
  std::span<const double> endpoint_inverse(int n) const { return {&inv_[4 * static_cast<std::size_t>(n - 1)], 4}; }

 private:
  TransformKernels K_;
  std::vector<double> inv_;
};

inline ControllerGains make_controller_gains(double lambda, const Grid2D& g, double tau, double dt, Truncation trunc = {},
                                             TraceSign sign = TraceSign::plus) {
  const int S = static_cast<int>(std::lround(tau / dt));
  require(S >= 1 && std::abs(S * dt - tau) <= 1e-9 * tau, "controller: dt must divide tau");
  const DelayGrid dg{g.rect.L, tau, g.nx, S};
  return ControllerGains(make_forward_kernels(lambda, g, dg, trunc, sign));
}

struct ControlRows {
  std::vector<double> U1, U2;
};

/// Volume parts int int gamma_i(x, theta, tau, xi) u dxi dtheta only.
inline ControlRows volume_feedback(const Field2D& u, const ControllerGains& G) {
  const auto& K = G.kernels();
  require(u.grid() == K.op1.grid(), "volume_feedback: grid mismatch");
  const int N = G.modes(), S = G.window();
  const auto um = field_x_modes(u, G.x_table());
  std::vector<double> c1(N), c2(N);
  K.op1.volume_modes(um, S, c1);
  K.op2.volume_modes(um, S, c2);
  return {G.x_table().synthesize(c1), G.x_table().synthesize(c2)};
}

/// U_i(x, t) = Vol_i[u](tau) - sign * (Tr_i^+[U1](tau) - Tr_i^-[U2](tau)); the history
/// must hold the S inputs at t - tau, ..., t - dt, and the unknown U(t) enters through
/// the endpoint weights and is solved per mode.
inline ControlRows compute_U(const Field2D& u, const ControlHistory& hist, const ControllerGains& G, double t) {
  const auto& K = G.kernels();
  const int N = G.modes(), S = G.window();
  require(u.grid() == K.op1.grid(), "compute_U: grid mismatch");
  require(hist.window() == S && hist.x_table().modes() == N, "compute_U: history does not match the gains");
  require(hist.size() >= static_cast<std::size_t>(S), "compute_U: history shorter than the delay window");
  require(std::abs(hist.latest_time() - (t - G.dt())) <= 1e-9 * G.dt() + 1e-12, "compute_U: stale history");

  const double sg = sign_value(K.sign);
  const auto um = field_x_modes(u, G.x_table());
  std::vector<double> v1(N), v2(N), c1(N), c2(N);
  K.op1.volume_modes(um, S, v1);
  K.op2.volume_modes(um, S, v2);
  for (int n = 1; n <= N; ++n) {
    double h11 = 0.0, h12 = 0.0, h21 = 0.0, h22 = 0.0;
    for (int d = 1; d <= S; ++d) {
      const double U1 = hist.modes(1, d - 1)[n - 1];
      const double U2 = hist.modes(2, d - 1)[n - 1];
      h11 += K.op1.trace_weight(Side::upper, n, d, S) * U1;
      h12 += K.op1.trace_weight(Side::lower, n, d, S) * U2;
      h21 += K.op2.trace_weight(Side::upper, n, d, S) * U1;
      h22 += K.op2.trace_weight(Side::lower, n, d, S) * U2;
    }
    const double r1 = v1[n - 1] - sg * (h11 - h12);
    const double r2 = v2[n - 1] - sg * (h21 - h22);
    const auto q = G.endpoint_inverse(n);
    c1[n - 1] = q[0] * r1 + q[1] * r2;
    c2[n - 1] = q[2] * r1 + q[3] * r2;
  }
  return {G.x_table().synthesize(c1), G.x_table().synthesize(c2)};
}

struct GainEntry {
  int n = 0, m = 0;
  double gain1 = 0.0, gain2 = 0.0;
};

/// |volume gain| of each plant mode phi_n varphi_m into U1, U2 (coefficient of phi_n).
inline std::vector<GainEntry> closed_loop_gain_spectrum(const ControllerGains& G, int M) {
  const auto& K = G.kernels();
  const Grid2D& g = K.op1.grid();
  require(M >= 1 && M <= g.y_axis().nyquist_modes(), "closed_loop_gain_spectrum: M out of range");
  const int N = G.modes(), S = G.window(), ny = g.ny;
  const auto ya = g.y_axis();
  std::vector<GainEntry> out;
  std::vector<double> um(static_cast<std::size_t>(N) * ny), c1(N), c2(N);
  for (int m = 1; m <= M; ++m) {
    for (int n = 0; n < N; ++n)
      for (int q = 0; q < ny; ++q) um[static_cast<std::size_t>(n) * ny + q] = eval_phi_y(m, ya.node(q), g.rect);
    K.op1.volume_modes(um, S, c1);
    K.op2.volume_modes(um, S, c2);
    for (int n = 1; n <= N; ++n) out.push_back({n, m, std::abs(c1[n - 1]), std::abs(c2[n - 1])});
  }
  return out;
}

}  // namespace bs2d
