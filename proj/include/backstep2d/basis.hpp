#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grid.hpp"

namespace bs2d {

namespace detail {

inline double sine_mode(int n, double x, double half) {
  require(n >= 1, "sine mode index must be >= 1");
  const double tol = 1e-12 * half;
  require(x >= -half - tol && x <= half + tol, "sine mode evaluated outside its interval");
  if (x <= -half || x >= half) return 0.0;
  return std::sin(n * std::numbers::pi * (x + half) / (2.0 * half));
}

inline double sine_mode_slope(int n, double x, double half) {
  require(n >= 1, "sine mode index must be >= 1");
  const double k = n * std::numbers::pi / (2.0 * half);
  if (x <= -half) return k;
  if (x >= half) return (n % 2 == 0) ? k : -k;
  return k * std::cos(n * std::numbers::pi * (x + half) / (2.0 * half));
}

}  // namespace detail

/// phi_n(x) = sin(n pi (x + L) / 2L); exactly zero at x = +-L.
inline double eval_phi_x(int n, double x, const RectangleSpec& rect) { return detail::sine_mode(n, x, rect.L); }

/// varphi_m(y) = sin(m pi (y + l) / 2l); exactly zero at y = +-l.
inline double eval_phi_y(int m, double y, const RectangleSpec& rect) { return detail::sine_mode(m, y, rect.l); }

inline double eval_phi_x_slope(int n, double x, const RectangleSpec& rect) { return detail::sine_mode_slope(n, x, rect.L); }
inline double eval_phi_y_slope(int m, double y, const RectangleSpec& rect) { return detail::sine_mode_slope(m, y, rect.l); }

/// Eigenvalue n^2 pi^2 / (4 half^2) of -d^2/dx^2 with Dirichlet ends on [-half, half].
inline double sine_eigenvalue(int n, double half) {
  const double k = n * std::numbers::pi / (2.0 * half);
  return k * k;
}

/// Sampled sine modes 1..N on a uniform axis with trapezoid weights.
/// analyze() computes (1/half) * sum_i w_i f_i phi_n(x_i), which is the exact
/// discrete sine transform on the grid for n below Nyquist.
class SineTable {
 public:
  SineTable() = default;
  SineTable(const UniformAxis& axis, int modes) : axis_(axis), modes_(modes) {
    require(modes >= 0, "SineTable: negative mode count");
    require(axis.symmetric(), "SineTable: axis must be symmetric");
    half_ = axis.hi();
    const int nx = axis.count();
    table_.resize(static_cast<std::size_t>(modes) * nx);
    scaled_.resize(table_.size());
    for (int n = 1; n <= modes; ++n)
      for (int i = 0; i < nx; ++i) {
        const double v = detail::sine_mode(n, axis.node(i), half_);
        table_[idx(n, i)] = v;
        scaled_[idx(n, i)] = v * axis.weight(i) / half_;
      }
  }

  int modes() const { return modes_; }
  int size() const { return axis_.count(); }
  const UniformAxis& axis() const { return axis_; }
  double value(int n, int i) const { return table_[idx(n, i)]; }

  void analyze(std::span<const double> f, std::span<double> out) const {
    require(static_cast<int>(f.size()) == axis_.count(), "SineTable::analyze: length mismatch");
    require(static_cast<int>(out.size()) >= modes_, "SineTable::analyze: output too short");
    const int nx = axis_.count();
    for (int n = 1; n <= modes_; ++n) {
      const double* w = &scaled_[idx(n, 0)];
      double acc = 0.0;
      for (int i = 0; i < nx; ++i) acc += w[i] * f[i];
      out[n - 1] = acc;
    }
  }
  std::vector<double> analyze(std::span<const double> f) const {
    std::vector<double> out(modes_);
    analyze(f, out);
    return out;
  }

  void synthesize(std::span<const double> c, std::span<double> out) const {
    require(static_cast<int>(out.size()) == axis_.count(), "SineTable::synthesize: length mismatch");
    const int nx = axis_.count();
    const int nm = std::min<int>(modes_, static_cast<int>(c.size()));
    for (int i = 0; i < nx; ++i) out[i] = 0.0;
    for (int n = 1; n <= nm; ++n) {
      const double cn = c[n - 1];
      if (cn == 0.0) continue;
      const double* t = &table_[idx(n, 0)];
      for (int i = 0; i < nx; ++i) out[i] += cn * t[i];
    }
  }
  std::vector<double> synthesize(std::span<const double> c) const {
    std::vector<double> out(axis_.count());
    synthesize(c, out);
    return out;
  }

 private:
  std::size_t idx(int n, int i) const { return static_cast<std::size_t>(n - 1) * axis_.count() + i; }

  UniformAxis axis_;
  int modes_ = 0;
  double half_ = 1.0;
  std::vector<double> table_;
  std::vector<double> scaled_;
};

/// Coefficients a_{n,m}, n = 1..N, m = 1..M.
class CoefficientGrid {
 public:
  CoefficientGrid() = default;
  CoefficientGrid(const RectangleSpec& rect, int N, int M)
      : rect_(rect), N_(N), M_(M), a_(static_cast<std::size_t>(N) * M, 0.0) {
    require(N >= 0 && M >= 0, "CoefficientGrid: negative truncation");
  }

  const RectangleSpec& rect() const { return rect_; }
  int N() const { return N_; }
  int M() const { return M_; }
  double& at(int n, int m) { return a_[static_cast<std::size_t>(n - 1) * M_ + (m - 1)]; }
  double at(int n, int m) const { return a_[static_cast<std::size_t>(n - 1) * M_ + (m - 1)]; }
  const std::vector<double>& values() const { return a_; }

  bool all_finite() const {
    for (double v : a_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  RectangleSpec rect_;
  int N_ = 0, M_ = 0;
  std::vector<double> a_;
};

/// Trapezoid analysis in both directions. N, M default to the Nyquist caps.
inline CoefficientGrid analyze_field(const Field2D& f, int N = -1, int M = -1) {
  const Grid2D& g = f.grid();
  const auto xa = g.x_axis();
  const auto ya = g.y_axis();
  if (N < 0) N = xa.nyquist_modes();
  if (M < 0) M = ya.nyquist_modes();
  require(N <= xa.nyquist_modes(), "analyze_field: N exceeds the x-grid Nyquist limit " + std::to_string(xa.nyquist_modes()));
  require(M <= ya.nyquist_modes(), "analyze_field: M exceeds the y-grid Nyquist limit " + std::to_string(ya.nyquist_modes()));

  const SineTable tx(xa, N);
  const SineTable ty(ya, M);
  std::vector<double> xmodes(static_cast<std::size_t>(N) * g.ny);
  for (int j = 0; j < g.ny; ++j) {
    const auto c = tx.analyze(f.row(j));
    for (int n = 0; n < N; ++n) xmodes[static_cast<std::size_t>(n) * g.ny + j] = c[n];
  }
  CoefficientGrid out(g.rect, N, M);
  for (int n = 1; n <= N; ++n) {
    std::span<const double> col(&xmodes[static_cast<std::size_t>(n - 1) * g.ny], g.ny);
    const auto c = ty.analyze(col);
    for (int m = 1; m <= M; ++m) out.at(n, m) = c[m - 1];
  }
  return out;
}

inline Field2D synthesize_field(const CoefficientGrid& c, const Grid2D& g) {
  require(c.all_finite(), "synthesize_field: non-finite coefficient");
  Field2D out(g);
  const auto xa = g.x_axis();
  const auto ya = g.y_axis();
  std::vector<double> phx(static_cast<std::size_t>(c.N()) * g.nx);
  std::vector<double> phy(static_cast<std::size_t>(c.M()) * g.ny);
  for (int n = 1; n <= c.N(); ++n)
    for (int i = 0; i < g.nx; ++i) phx[static_cast<std::size_t>(n - 1) * g.nx + i] = eval_phi_x(n, xa.node(i), g.rect);
  for (int m = 1; m <= c.M(); ++m)
    for (int j = 0; j < g.ny; ++j) phy[static_cast<std::size_t>(m - 1) * g.ny + j] = eval_phi_y(m, ya.node(j), g.rect);

  std::vector<double> colsum(c.N());
  for (int j = 0; j < g.ny; ++j) {
    for (int n = 1; n <= c.N(); ++n) {
      double acc = 0.0;
      for (int m = 1; m <= c.M(); ++m) acc += c.at(n, m) * phy[static_cast<std::size_t>(m - 1) * g.ny + j];
      colsum[n - 1] = acc;
    }
    for (int i = 0; i < g.nx; ++i) {
      double acc = 0.0;
      for (int n = 1; n <= c.N(); ++n) acc += colsum[n - 1] * phx[static_cast<std::size_t>(n - 1) * g.nx + i];
      out.at(i, j) = acc;
    }
  }
  return out;
}

/// Trapezoid integral of f^2 over D1.
inline double integral_sq(const Field2D& f) {
  const auto xa = f.grid().x_axis();
  const auto ya = f.grid().y_axis();
  double acc = 0.0;
  for (int j = 0; j < f.ny(); ++j) {
    double r = 0.0;
    for (int i = 0; i < f.nx(); ++i) r += xa.weight(i) * f.at(i, j) * f.at(i, j);
    acc += ya.weight(j) * r;
  }
  return acc;
}

struct ParsevalSides {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// ||f||^2 by quadrature against L*l*sum a_{nm}^2 at the Nyquist truncation.
inline ParsevalSides parseval_check(const Field2D& f) {
  const auto c = analyze_field(f);
  double s = 0.0;
  for (double a : c.values()) s += a * a;
  return {integral_sq(f), f.grid().rect.L * f.grid().rect.l * s};
}

}  // namespace bs2d
