#pragma once

#include <array>
#include <cmath>

#include "grid.hpp"

namespace bs2d {

enum class BesselKind { modified, ordinary };

/// f(w) = X1(sqrt w)/sqrt w and its first two w-derivatives, X1 = I1 or J1.
struct BesselRatio {
  double f = 0.5;
  double df = 0.0;
  double d2f = 0.0;
};

namespace detail {

constexpr int kBesselTerms = 48;

/// a_k in f(w) = sum_k a_k w^k, a_k = s^k / (2 * 4^k * k! * (k+1)!).
inline const std::array<double, kBesselTerms + 2>& bessel_ratio_coeffs(BesselKind kind) {
  static const auto build = [](double sign) {
    std::array<double, kBesselTerms + 2> a{};
    a[0] = 0.5;
    for (int k = 1; k < kBesselTerms + 2; ++k) a[k] = a[k - 1] * sign / (4.0 * k * (k + 1));
    return a;
  };
  static const auto mod = build(1.0);
  static const auto ord = build(-1.0);
  return kind == BesselKind::modified ? mod : ord;
}

}  // namespace detail

/// Power series for sqrt(w) <= 12, std::cyl_bessel_* beyond. Requires w >= 0.
inline BesselRatio bessel1_ratio(BesselKind kind, double w) {
  require(w >= 0.0 && std::isfinite(w), "bessel1_ratio: argument must be finite and >= 0");
  BesselRatio r;
  if (w <= 144.0) {
    const auto& a = detail::bessel_ratio_coeffs(kind);
    double f = 0.0, d1 = 0.0, d2 = 0.0;
    for (int k = detail::kBesselTerms - 1; k >= 0; --k) {
      f = f * w + a[k];
      d1 = d1 * w + (k + 1) * a[k + 1];
      d2 = d2 * w + (k + 2) * (k + 1) * a[k + 2];
    }
    r.f = f;
    r.df = d1;
    r.d2f = d2;
    return r;
  }
  const double z = std::sqrt(w);
  if (kind == BesselKind::modified) {
    r.f = std::cyl_bessel_i(1.0, z) / z;
    r.df = std::cyl_bessel_i(2.0, z) / (2.0 * w);
    r.d2f = std::cyl_bessel_i(3.0, z) / (4.0 * w * z);
  } else {
    r.f = std::cyl_bessel_j(1.0, z) / z;
    r.df = -std::cyl_bessel_j(2.0, z) / (2.0 * w);
    r.d2f = std::cyl_bessel_j(3.0, z) / (4.0 * w * z);
  }
  return r;
}

}  // namespace bs2d
