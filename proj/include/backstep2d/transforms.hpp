#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "basis.hpp"
#include "grid.hpp"
#include "kernel_operator.hpp"
#include "kernels.hpp"

namespace bs2d {

/// Orientation of the boundary-history terms in the affine maps. With `plus`,
///   z_i = v_i - Vol_i[u] + Tr_i^+[v1] - Tr_i^-[v2],
/// which is the orientation under which z_i is transported (z_t = z_s). `minus` flips
/// both history terms; it does not intertwine the transport dynamics and is kept only
/// for comparison runs.
enum class TraceSign { plus, minus };

inline double sign_value(TraceSign s) { return s == TraceSign::plus ? 1.0 : -1.0; }

/// Row-wise Volterra map f(x, y) -> int_{-y}^{y} K(y, xi) f(x, xi) dxi by trapezoid on
/// the y-nodes between -y and y.
class VolterraRows {
 public:
  VolterraRows() = default;
  VolterraRows(const ClosedFormKernel& k, const Grid2D& g) : ny_(g.ny) {
    k.validate();
    g.validate();
    require(k.rect == g.rect, "VolterraRows: kernel rectangle does not match the grid");
    const auto ya = g.y_axis();
    const double h = ya.step();
    rows_.resize(ny_);
    for (int j = 0; j < ny_; ++j) {
      const int jm = ny_ - 1 - j;
      if (jm == j) continue;
      const int lo = std::min(j, jm), hi = std::max(j, jm);
      const double orient = (j > jm) ? 1.0 : -1.0;
      const double y = ya.node(j);
      for (int q = lo; q <= hi; ++q) {
        const double w = (q == lo || q == hi) ? 0.5 * h : h;
        rows_[j].push_back({q, orient * w * eval_closed_form(k, y, ya.node(q))});
      }
    }
  }

  /// out.row(j) = f.row(j) + sign * int_{-y_j}^{y_j} K f dxi.
  Field2D apply(const Field2D& f, double sign) const {
    require(f.ny() == ny_, "VolterraRows: grid mismatch");
    Field2D out = f;
    const int nx = f.nx();
    for (int j = 0; j < ny_; ++j) {
      auto r = out.row(j);
      for (const auto& t : rows_[j]) {
        const auto src = f.row(t.q);
        const double c = sign * t.c;
        for (int i = 0; i < nx; ++i) r[i] += c * src[i];
      }
    }
    return out;
  }

 private:
  struct Tap {
    int q;
    double c;
  };
  int ny_ = 0;
  std::vector<std::vector<Tap>> rows_;
};

/// w = u - int_{-y}^{y} p(y, xi) u(x, xi) dxi.
inline Field2D forward_w(const Field2D& u, const ClosedFormKernel& p) {
  require(p.kind == KernelForm::P, "forward_w: expects kernel p");
  return VolterraRows(p, u.grid()).apply(u, -1.0);
}

/// u = w + int_{-y}^{y} q(y, xi) w(x, xi) dxi.
inline Field2D inverse_u(const Field2D& w, const ClosedFormKernel& q) {
  require(q.kind == KernelForm::Q, "inverse_u: expects kernel q");
  return VolterraRows(q, w.grid()).apply(w, 1.0);
}

/// Discretized gamma_1, gamma_2 (forward) or eta_1, eta_2 (inverse) terms on one grid pair.
struct TransformKernels {
  KernelOperator op1;
  KernelOperator op2;
  TraceSign sign = TraceSign::plus;

  const KernelOperator& op(int i) const {
    require(i == 1 || i == 2, "TransformKernels: index must be 1 or 2");
    return i == 1 ? op1 : op2;
  }
};

/// Series kernels sized by the tail rule at s_min = ds and capped at the x-grid Nyquist limit
/// (modes above it are not representable on the grid).
inline SeriesKernel grid_series_kernel(SeriesKind kind, double lambda, const Grid2D& g, const DelayGrid& dg,
                                       Truncation trunc = {}) {
  if (trunc.N > 0 && trunc.M > 0) {
    require(trunc.N <= g.x_axis().nyquist_modes(), "truncation N exceeds the x-grid Nyquist limit");
    return SeriesKernel(kind, lambda, g.rect, trunc, dg.ds());
  }
  return SeriesKernel::with_tail_rule(kind, lambda, g.rect, dg.ds(), kTailTolerance, g.x_axis().nyquist_modes());
}

inline TransformKernels make_forward_kernels(double lambda, const Grid2D& g, const DelayGrid& dg, Truncation trunc = {},
                                             TraceSign sign = TraceSign::plus) {
  return {KernelOperator(grid_series_kernel(SeriesKind::GAMMA1, lambda, g, dg, trunc), g, dg),
          KernelOperator(grid_series_kernel(SeriesKind::GAMMA2, lambda, g, dg, trunc), g, dg), sign};
}

inline TransformKernels make_inverse_kernels(double lambda, const Grid2D& g, const DelayGrid& dg, Truncation trunc = {},
                                             TraceSign sign = TraceSign::plus) {
  return {KernelOperator(grid_series_kernel(SeriesKind::ETA1, lambda, g, dg, trunc), g, dg),
          KernelOperator(grid_series_kernel(SeriesKind::ETA2, lambda, g, dg, trunc), g, dg), sign};
}

namespace detail {

inline void check_transform_grids(const DelayField& a, const DelayField& b, const Field2D& f, const KernelOperator& op) {
  require(a.grid() == b.grid(), "transform: delay fields on different grids");
  require(a.grid() == op.delay_grid(), "transform: delay grid does not match the kernel operator");
  require(f.grid() == op.grid(), "transform: plant grid does not match the kernel operator");
}

/// out = a + vol_sign * Vol[f] + hist_sign * (Tr^+[h1] - Tr^-[h2]), row 0 pointwise.
inline DelayField affine_map(const DelayField& a, const DelayField& h1, const DelayField& h2, const Field2D& f,
                             const KernelOperator& op, double vol_sign, double hist_sign) {
  DelayField out = a;
  const auto& tx = op.x_table();
  const int N = op.modes();
  const int S = op.s_intervals();
  const auto fm = field_x_modes(f, tx);
  const auto m1 = delay_x_modes(h1, tx);
  const auto m2 = delay_x_modes(h2, tx);

  const auto slice = op.profile_slice(f);
  auto r0 = out.row(0);
  for (int i = 0; i < out.nx(); ++i) r0[i] += vol_sign * slice[i];

  std::vector<double> vol(N), t1(N), t2(N), c(N), row(out.nx());
  for (int j = 1; j <= S; ++j) {
    op.volume_modes(fm, j, vol);
    op.trace_modes(Side::upper, m1, j, t1);
    op.trace_modes(Side::lower, m2, j, t2);
    for (int n = 0; n < N; ++n) c[n] = vol_sign * vol[n] + hist_sign * (t1[n] - t2[n]);
    tx.synthesize(c, row);
    auto r = out.row(j);
    for (int i = 0; i < out.nx(); ++i) r[i] += row[i];
  }
  return out;
}

}  // namespace detail

/// z_i from (v1, v2, u) with the gamma_i kernels.
inline DelayField forward_z(int i, const DelayField& v1, const DelayField& v2, const Field2D& u, const TransformKernels& K) {
  const auto& op = K.op(i);
  require(is_gamma(op.kind()), "forward_z: expects gamma kernels");
  detail::check_transform_grids(v1, v2, u, op);
  return detail::affine_map(i == 1 ? v1 : v2, v1, v2, u, op, -1.0, sign_value(K.sign));
}

/// v_i from (z1, z2, w) with the eta_i kernels.
inline DelayField inverse_v(int i, const DelayField& z1, const DelayField& z2, const Field2D& w, const TransformKernels& K) {
  const auto& op = K.op(i);
  require(!is_gamma(op.kind()), "inverse_v: expects eta kernels");
  detail::check_transform_grids(z1, z2, w, op);
  return detail::affine_map(i == 1 ? z1 : z2, z1, z2, w, op, 1.0, -sign_value(K.sign));
}

/// m = w - ((y+l)/2l) z1(x,0) + ((y-l)/2l) z2(x,0).
inline Field2D change_of_variable_m(const Field2D& w, std::span<const double> z1_0, std::span<const double> z2_0) {
  require(static_cast<int>(z1_0.size()) == w.nx() && static_cast<int>(z2_0.size()) == w.nx(),
          "change_of_variable_m: boundary rows must match the x-grid");
  Field2D m = w;
  const auto ya = w.grid().y_axis();
  const double l = w.grid().rect.l;
  for (int j = 0; j < w.ny(); ++j) {
    const double y = ya.node(j);
    auto r = m.row(j);
    if (j == w.ny() - 1) {
      for (int i = 0; i < w.nx(); ++i) r[i] = w.at(i, j) - z1_0[i];
    } else if (j == 0) {
      for (int i = 0; i < w.nx(); ++i) r[i] = w.at(i, j) - z2_0[i];
    } else {
      const double a = (y + l) / (2.0 * l), b = (y - l) / (2.0 * l);
      for (int i = 0; i < w.nx(); ++i) r[i] = w.at(i, j) - a * z1_0[i] + b * z2_0[i];
    }
  }
  return m;
}

}  // namespace bs2d
