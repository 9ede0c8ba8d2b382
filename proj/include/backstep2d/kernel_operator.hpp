#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "basis.hpp"
#include "grid.hpp"
#include "kernels.hpp"

namespace bs2d {

/// x-mode coefficients u_n(xi_k) of every row of a Field2D, stored n-major (N x ny).
inline std::vector<double> field_x_modes(const Field2D& u, const SineTable& tx) {
  const int N = tx.modes(), ny = u.ny();
  std::vector<double> out(static_cast<std::size_t>(N) * ny);
  std::vector<double> c(N);
  for (int k = 0; k < ny; ++k) {
    tx.analyze(u.row(k), c);
    for (int n = 0; n < N; ++n) out[static_cast<std::size_t>(n) * ny + k] = c[n];
  }
  return out;
}

/// x-mode coefficients of every s-row of a DelayField, stored row-major ((S+1) x N).
inline std::vector<double> delay_x_modes(const DelayField& v, const SineTable& tx) {
  const int N = tx.modes();
  std::vector<double> out(static_cast<std::size_t>(N) * (v.ns() + 1));
  for (int k = 0; k <= v.ns(); ++k) tx.analyze(v.row(k), std::span<double>(&out[static_cast<std::size_t>(k) * N], N));
  return out;
}

/// Discretization of the two integral terms generated by one series kernel on the
/// simulation grids, in x-mode space:
///   volume:  Vol_n(s_j) = e^{(growth - mu_n) s_j} sum_k w_k P(xi_k, s_j) u_n(xi_k),
///   trace:   Tr_n(s_j) = int_0^{s_j} e^{(growth - mu_n) rho} T(rho) h_n(s_j - rho) d rho,
/// with T the edge flux of the kernel profile (weakly singular at rho = 0) and h
/// linearly interpolated between s-nodes (product integration). The s = 0 volume slice
/// is the pointwise profile integral int profile(xi) u(x, xi) dxi.
class KernelOperator {
 public:
  KernelOperator() = default;
  KernelOperator(const SeriesKernel& k, const Grid2D& grid, const DelayGrid& dgrid, int flux_modes = 400)
      : kind_(k.kind()), grid_(grid), dgrid_(dgrid), N_(k.N()), M_(k.M()), S_(dgrid.ns) {
    grid.validate();
    dgrid.validate();
    require(dgrid.nx == grid.nx && dgrid.L == grid.rect.L, "KernelOperator: delay grid does not match the plant x-grid");
    require(k.rect() == grid.rect, "KernelOperator: kernel rectangle does not match the grid");
    const double ds = dgrid.ds();
    k.check_s(ds);
    require(N_ <= grid.x_axis().nyquist_modes(), "KernelOperator: kernel N exceeds the x-grid Nyquist limit");
    tx_ = SineTable(grid.x_axis(), N_);

    const auto ya = grid.y_axis();
    const int ny = grid.ny;
    vol_.assign(static_cast<std::size_t>(S_ + 1) * ny, 0.0);
    for (int q = 0; q < ny; ++q) vol_[q] = k.profile(ya.node(q)) * ya.weight(q);
    std::vector<double> phy(static_cast<std::size_t>(k.M()) * ny);
    for (int m = 1; m <= k.M(); ++m)
      for (int q = 0; q < ny; ++q) phy[static_cast<std::size_t>(m - 1) * ny + q] = eval_phi_y(m, ya.node(q), grid.rect);
    for (int j = 1; j <= S_; ++j) {
      const double s = dgrid.s(j);
      double* row = &vol_[static_cast<std::size_t>(j) * ny];
      for (int m = 1; m <= k.M(); ++m) {
        const double c = std::exp(-k.nu(m) * s) * k.profile_coeff(m);
        for (int q = 0; q < ny; ++q) row[q] += c * phy[static_cast<std::size_t>(m - 1) * ny + q];
      }
      for (int q = 0; q < ny; ++q) row[q] *= ya.weight(q);
    }

    growth_.resize(static_cast<std::size_t>(S_ + 1) * N_);
    for (int j = 0; j <= S_; ++j)
      for (int n = 1; n <= N_; ++n) growth_[static_cast<std::size_t>(j) * N_ + (n - 1)] = std::exp((k.growth() - k.mu(n)) * dgrid.s(j));

    build_trace_weights(k, flux_modes);
  }

  SeriesKind kind() const { return kind_; }
  int modes() const { return N_; }
  int y_modes() const { return M_; }
  int s_intervals() const { return S_; }
  const SineTable& x_table() const { return tx_; }
  const Grid2D& grid() const { return grid_; }
  const DelayGrid& delay_grid() const { return dgrid_; }

  /// Vol_n(s_j), j >= 1, from x-modes u_n(xi_k) laid out as in field_x_modes.
  void volume_modes(std::span<const double> u_modes, int j, std::span<double> out) const {
    require(j >= 1 && j <= S_, "KernelOperator::volume_modes: s-node out of range");
    const int ny = grid_.ny;
    const double* w = &vol_[static_cast<std::size_t>(j) * ny];
    for (int n = 0; n < N_; ++n) {
      const double* un = &u_modes[static_cast<std::size_t>(n) * ny];
      double acc = 0.0;
      for (int q = 0; q < ny; ++q) acc += w[q] * un[q];
      out[n] = growth_[static_cast<std::size_t>(j) * N_ + n] * acc;
    }
  }

  /// s = 0 slice, pointwise in x: int profile(xi) u(x_i, xi) dxi by trapezoid.
  std::vector<double> profile_slice(const Field2D& u) const {
    std::vector<double> out(grid_.nx, 0.0);
    for (int q = 0; q < grid_.ny; ++q) {
      const double w = vol_[q];
      const auto r = u.row(q);
      for (int i = 0; i < grid_.nx; ++i) out[i] += w * r[i];
    }
    return out;
  }

  /// Product-integration weight of history node s_{j-d} in Tr_n(s_j).
  double trace_weight(Side side, int n, int d, int j) const {
    const auto& A = side == Side::upper ? a_hi_ : a_lo_;
    const auto& B = side == Side::upper ? b_hi_ : b_lo_;
    double w = 0.0;
    if (d < j) w += A[static_cast<std::size_t>(n - 1) * (S_ + 1) + d];
    if (d > 0) w += B[static_cast<std::size_t>(n - 1) * (S_ + 1) + d];
    return w;
  }

  /// Tr_n(s_j) for all n from delay x-modes laid out as in delay_x_modes.
  void trace_modes(Side side, std::span<const double> h_modes, int j, std::span<double> out) const {
    require(j >= 0 && j <= S_, "KernelOperator::trace_modes: s-node out of range");
    for (int n = 1; n <= N_; ++n) {
      double acc = 0.0;
      for (int d = 0; d <= j; ++d) acc += trace_weight(side, n, d, j) * h_modes[static_cast<std::size_t>(j - d) * N_ + (n - 1)];
      out[n - 1] = acc;
    }
  }

 private:
  void build_trace_weights(const SeriesKernel& k, int flux_modes) {
    const BoundaryFlux flux(k, flux_modes);
    const auto& rule = detail::unit_gauss16();
    const double ds = dgrid_.ds();
    constexpr int kPanels0 = 4;

    // Quadrature nodes per interval d: rho, weight * T(rho), and the hat value.
    struct Node {
      double rho, wt_hi, wt_lo, down;
    };
    std::vector<std::vector<Node>> nodes(S_);
    for (int d = 0; d < S_; ++d) {
      if (d == 0) {
        // rho = ds u^2 removes the rho^{-1/2} endpoint singularity.
        for (int p = 0; p < kPanels0; ++p)
          for (std::size_t q = 0; q < rule.t.size(); ++q) {
            const double u = (p + rule.t[q]) / kPanels0;
            const double rho = ds * u * u;
            const double jac = 2.0 * ds * u * rule.w[q] / kPanels0;
            nodes[d].push_back({rho, jac * flux(Side::upper, rho), jac * flux(Side::lower, rho), 1.0 - u * u});
          }
      } else {
        for (int p = 0; p < 2; ++p)
          for (std::size_t q = 0; q < rule.t.size(); ++q) {
            const double t = (p + rule.t[q]) / 2.0;
            const double rho = (d + t) * ds;
            const double wq = ds * rule.w[q] / 2.0;
            nodes[d].push_back({rho, wq * flux(Side::upper, rho), wq * flux(Side::lower, rho), 1.0 - t});
          }
      }
    }

    const std::size_t stride = S_ + 1;
    a_hi_.assign(N_ * stride, 0.0);
    a_lo_.assign(N_ * stride, 0.0);
    b_hi_.assign(N_ * stride, 0.0);
    b_lo_.assign(N_ * stride, 0.0);
    for (int n = 1; n <= N_; ++n) {
      const double rate = k.growth() - k.mu(n);
      for (int d = 0; d < S_; ++d) {
        double ah = 0.0, al = 0.0, bh = 0.0, bl = 0.0;
        for (const auto& nd : nodes[d]) {
          const double e = std::exp(rate * nd.rho);
          ah += e * nd.wt_hi * nd.down;
          al += e * nd.wt_lo * nd.down;
          bh += e * nd.wt_hi * (1.0 - nd.down);
          bl += e * nd.wt_lo * (1.0 - nd.down);
        }
        // Interval d carries node offset d on its falling hat and offset d+1 on its rising hat.
        a_hi_[(n - 1) * stride + d] = ah;
        a_lo_[(n - 1) * stride + d] = al;
        b_hi_[(n - 1) * stride + d + 1] = bh;
        b_lo_[(n - 1) * stride + d + 1] = bl;
      }
    }
  }

  SeriesKind kind_ = SeriesKind::GAMMA1;
  Grid2D grid_;
  DelayGrid dgrid_;
  int N_ = 0, M_ = 0, S_ = 0;
  SineTable tx_;
  std::vector<double> vol_;
  std::vector<double> growth_;
  std::vector<double> a_hi_, a_lo_, b_hi_, b_lo_;
};

}  // namespace bs2d
