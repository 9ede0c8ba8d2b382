#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bs2d {

/// Violated precondition of a library call.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

/// Half-widths of the plant rectangle [-L, L] x [-l, l].
struct RectangleSpec {
  double L = 1.0;
  double l = 1.0;

  void validate() const {
    require(std::isfinite(L) && L > 0.0, "RectangleSpec: L must be positive");
    require(std::isfinite(l) && l > 0.0, "RectangleSpec: l must be positive");
  }
  bool operator==(const RectangleSpec&) const = default;
};

struct ModeIndex {
  int n = 1;
  int m = 1;
  void validate() const { require(n >= 1 && m >= 1, "ModeIndex: modes start at 1"); }
};

/// Uniform nodes on [lo, hi] with both endpoints included. Symmetric axes
/// (lo == -hi) are built so that node(count-1-i) == -node(i) exactly.
class UniformAxis {
 public:
  UniformAxis() = default;
  UniformAxis(double lo, double hi, int count) : lo_(lo), hi_(hi), count_(count) {
    require(count >= 2, "UniformAxis: need at least two nodes");
    require(hi > lo, "UniformAxis: empty interval");
    h_ = (hi - lo) / (count - 1);
    symmetric_ = (lo == -hi);
  }

  int count() const { return count_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double step() const { return h_; }
  bool symmetric() const { return symmetric_; }

  double node(int i) const {
    if (i <= 0) return lo_;
    if (i >= count_ - 1) return hi_;
    if (symmetric_) {
      const int mirror = count_ - 1 - i;
      if (mirror == i) return 0.0;
      if (mirror < i) return -(lo_ + mirror * h_);
    }
    return lo_ + i * h_;
  }

  /// Composite trapezoid weight of node i.
  double weight(int i) const { return (i == 0 || i == count_ - 1) ? 0.5 * h_ : h_; }

  std::vector<double> nodes() const {
    std::vector<double> out(count_);
    for (int i = 0; i < count_; ++i) out[i] = node(i);
    return out;
  }
  std::vector<double> weights() const {
    std::vector<double> out(count_);
    for (int i = 0; i < count_; ++i) out[i] = weight(i);
    return out;
  }

  /// Largest mode count below the grid's Nyquist limit.
  int nyquist_modes() const { return (count_ - 1) / 2; }

  bool operator==(const UniformAxis& o) const {
    return lo_ == o.lo_ && hi_ == o.hi_ && count_ == o.count_;
  }

 private:
  double lo_ = 0.0, hi_ = 1.0, h_ = 1.0;
  int count_ = 2;
  bool symmetric_ = false;
};

/// Tensor grid over D1 = [-L, L] x [-l, l].
struct Grid2D {
  RectangleSpec rect;
  int nx = 101;
  int ny = 101;

  UniformAxis x_axis() const { return UniformAxis(-rect.L, rect.L, nx); }
  UniformAxis y_axis() const { return UniformAxis(-rect.l, rect.l, ny); }
  double dx() const { return 2.0 * rect.L / (nx - 1); }
  double dy() const { return 2.0 * rect.l / (ny - 1); }

  void validate() const {
    rect.validate();
    require(nx >= 3 && ny >= 3, "Grid2D: need at least 3 nodes per direction");
    require(ny % 2 == 1, "Grid2D: ny must be odd so that every y-node has its mirror -y on the grid");
  }
  bool operator==(const Grid2D&) const = default;
};

/// Scalar field sampled on a Grid2D, stored row by row (fixed y).
class Field2D {
 public:
  Field2D() = default;
  explicit Field2D(const Grid2D& g) : grid_(g), v_(static_cast<std::size_t>(g.nx) * g.ny, 0.0) {
    g.validate();
  }

  const Grid2D& grid() const { return grid_; }
  int nx() const { return grid_.nx; }
  int ny() const { return grid_.ny; }

  double& at(int i, int j) { return v_[static_cast<std::size_t>(j) * grid_.nx + i]; }
  double at(int i, int j) const { return v_[static_cast<std::size_t>(j) * grid_.nx + i]; }

  std::span<double> row(int j) { return {v_.data() + static_cast<std::size_t>(j) * grid_.nx, static_cast<std::size_t>(grid_.nx)}; }
  std::span<const double> row(int j) const {
    return {v_.data() + static_cast<std::size_t>(j) * grid_.nx, static_cast<std::size_t>(grid_.nx)};
  }

  std::vector<double>& data() { return v_; }
  const std::vector<double>& data() const { return v_; }

  template <class F>
  static Field2D sample(const Grid2D& g, F&& f) {
    Field2D out(g);
    const auto xs = g.x_axis();
    const auto ys = g.y_axis();
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) out.at(i, j) = f(xs.node(i), ys.node(j));
    return out;
  }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

 private:
  Grid2D grid_;
  std::vector<double> v_;
};

/// Grid over D2 = [-L, L] x [0, tau]; ns counts intervals, so there are ns+1 s-nodes.
struct DelayGrid {
  double L = 1.0;
  double tau = 1.0;
  int nx = 101;
  int ns = 100;

  UniformAxis x_axis() const { return UniformAxis(-L, L, nx); }
  double ds() const { return tau / ns; }
  double s(int k) const { return k == ns ? tau : k * ds(); }

  void validate() const {
    require(L > 0.0 && tau > 0.0, "DelayGrid: L and tau must be positive");
    require(nx >= 3 && ns >= 1, "DelayGrid: too few nodes");
  }
  bool operator==(const DelayGrid&) const = default;
};

/// Scalar field on D2, stored row by row (fixed s). Row k sits at s = k*ds.
class DelayField {
 public:
  DelayField() = default;
  explicit DelayField(const DelayGrid& g) : grid_(g), v_(static_cast<std::size_t>(g.nx) * (g.ns + 1), 0.0) {
    g.validate();
  }

  const DelayGrid& grid() const { return grid_; }
  int nx() const { return grid_.nx; }
  int ns() const { return grid_.ns; }

  double& at(int i, int k) { return v_[static_cast<std::size_t>(k) * grid_.nx + i]; }
  double at(int i, int k) const { return v_[static_cast<std::size_t>(k) * grid_.nx + i]; }

  std::span<double> row(int k) { return {v_.data() + static_cast<std::size_t>(k) * grid_.nx, static_cast<std::size_t>(grid_.nx)}; }
  std::span<const double> row(int k) const {
    return {v_.data() + static_cast<std::size_t>(k) * grid_.nx, static_cast<std::size_t>(grid_.nx)};
  }

  std::vector<double>& data() { return v_; }
  const std::vector<double>& data() const { return v_; }

  template <class F>
  static DelayField sample(const DelayGrid& g, F&& f) {
    DelayField out(g);
    const auto xs = g.x_axis();
    for (int k = 0; k <= g.ns; ++k)
      for (int i = 0; i < g.nx; ++i) out.at(i, k) = f(xs.node(i), g.s(k));
    return out;
  }

 private:
  DelayGrid grid_;
  std::vector<double> v_;
};

inline DelayGrid delay_grid_for(const Grid2D& g, double tau, int ns) {
  return DelayGrid{g.rect.L, tau, g.nx, ns};
}

}  // namespace bs2d
