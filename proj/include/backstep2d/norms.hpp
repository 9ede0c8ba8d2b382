#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "basis.hpp"
#include "grid.hpp"

namespace bs2d {

inline double norm_L2_field(const Field2D& f) { return std::sqrt(integral_sq(f)); }

/// L2 norm of a sampled row on a uniform axis (trapezoid).
inline double norm_L2_row(std::span<const double> r, const UniformAxis& axis) {
  require(static_cast<int>(r.size()) == axis.count(), "norm_L2_row: length mismatch");
  double acc = 0.0;
  for (int i = 0; i < axis.count(); ++i) acc += axis.weight(i) * r[i] * r[i];
  return std::sqrt(acc);
}

namespace detail {

/// Second-order difference quotient at node i of a strided sequence of n samples.
inline double diff2(const double* f, std::ptrdiff_t stride, int n, int i, double h) {
  if (n < 3) return (f[stride] - f[0]) / h;
  if (i == 0) return (-3.0 * f[0] + 4.0 * f[stride] - f[2 * stride]) / (2.0 * h);
  if (i == n - 1) {
    const double* e = f + (n - 1) * stride;
    return (3.0 * e[0] - 4.0 * e[-stride] + e[-2 * stride]) / (2.0 * h);
  }
  return (f[(i + 1) * stride] - f[(i - 1) * stride]) / (2.0 * h);
}

}  // namespace detail

/// int int e^{b s} (g^2 + g_x^2 + g_s^2) over D2.
inline double weighted_H1_sq(const DelayField& g, double b) {
  const auto xa = g.grid().x_axis();
  const int nx = g.nx(), ns1 = g.ns() + 1;
  const double hx = xa.step(), hs = g.grid().ds();
  const double* base = g.data().data();
  double acc = 0.0;
  for (int k = 0; k < ns1; ++k) {
    const double ws = ((k == 0 || k == ns1 - 1) ? 0.5 * hs : hs) * (b == 0.0 ? 1.0 : std::exp(b * g.grid().s(k)));
    const double* row = base + static_cast<std::size_t>(k) * nx;
    double r = 0.0;
    for (int i = 0; i < nx; ++i) {
      const double gx = detail::diff2(row, 1, nx, i, hx);
      const double gs = detail::diff2(base + i, nx, ns1, k, hs);
      r += xa.weight(i) * (row[i] * row[i] + gx * gx + gs * gs);
    }
    acc += ws * r;
  }
  return acc;
}

/// sqrt of int int g^2 + g_x^2 + g_s^2 over D2.
inline double norm_H1_delay(const DelayField& g) { return std::sqrt(weighted_H1_sq(g, 0.0)); }

/// sqrt of int int g^2 over D2.
inline double norm_L2_delay(const DelayField& g) {
  const auto xa = g.grid().x_axis();
  const int ns1 = g.ns() + 1;
  const double hs = g.grid().ds();
  double acc = 0.0;
  for (int k = 0; k < ns1; ++k) {
    const double ws = (k == 0 || k == ns1 - 1) ? 0.5 * hs : hs;
    double r = 0.0;
    for (int i = 0; i < g.nx(); ++i) r += xa.weight(i) * g.at(i, k) * g.at(i, k);
    acc += ws * r;
  }
  return std::sqrt(acc);
}

}  // namespace bs2d
