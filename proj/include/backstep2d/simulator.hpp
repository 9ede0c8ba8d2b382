#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "basis.hpp"
#include "controller.hpp"
#include "grid.hpp"
#include "kernels.hpp"
#include "norms.hpp"
#include "transforms.hpp"

namespace bs2d {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class RunMode { OPEN_LOOP, CLOSED_LOOP, TARGET_ONLY };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::OPEN_LOOP: return "OPEN_LOOP";
    case RunMode::CLOSED_LOOP: return "CLOSED_LOOP";
    case RunMode::TARGET_ONLY: return "TARGET_ONLY";
  }
  return "?";
}

struct SimConfig {
  double lambda = 7.0;
  double tau = 1.0;
  RectangleSpec rect;
  int nx = 101;
  int ny = 101;
  double dt = 0.01;
  double t_end = 3.0;
  double theta_w = 0.5;
  /// Leading steps taken with theta_w = 1 to damp non-smooth initial data (0 = none).
  int damping_steps = 0;
  Truncation trunc{};  ///< zero entries select the tail rule
  RunMode mode = RunMode::CLOSED_LOOP;
  TraceSign trace_sign = TraceSign::plus;
  double divergence_factor = 1e9;
  /// Store full states every k steps (0 = only the initial state).
  int snapshot_every = 0;
  bool record_controls = false;
  /// Record u(x, slice_y, t) and u(slice_x, y, t) every step.
  bool record_slices = false;
  double slice_y = -0.5;
  double slice_x = 0.5;

  int ns() const { return static_cast<int>(std::lround(tau / dt)); }
  int steps() const { return static_cast<int>(std::lround(t_end / dt)); }
  Grid2D grid() const { return Grid2D{rect, nx, ny}; }
  DelayGrid delay_grid() const { return DelayGrid{rect.L, tau, nx, ns()}; }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError(what);
    };
    need(std::isfinite(lambda) && lambda > 0.0, "lambda must be > 0");
    need(std::isfinite(tau) && tau > 0.0, "tau must be > 0");
    need(rect.L > 0.0 && rect.l > 0.0, "L and l must be > 0");
    need(nx >= 5 && ny >= 5, "grid needs at least 5 nodes per direction");
    need(ny % 2 == 1, "ny must be odd so that mirrored y-nodes exist");
    need(nx % 2 == 1, "nx must be odd");
    need(std::isfinite(dt) && dt > 0.0, "dt must be > 0");
    need(ns() >= 1 && std::abs(ns() * dt - tau) <= 1e-9 * tau, "dt must divide tau exactly");
    need(t_end >= 0.0 && std::abs(steps() * dt - t_end) <= 1e-9 * std::max(1.0, t_end), "dt must divide t_end");
    need(theta_w >= 0.5 && theta_w <= 1.0, "theta_w must lie in [0.5, 1]");
    need(damping_steps >= 0, "damping_steps must be >= 0");
    need(trunc.N >= 0 && trunc.M >= 0, "truncation must be non-negative");
    if (trunc.N > 0 || trunc.M > 0) {
      need(trunc.N > 0 && trunc.M > 0, "truncation needs both N and M");
      need(trunc.N <= (nx - 1) / 2, "truncation N=" + std::to_string(trunc.N) + " exceeds the x-grid Nyquist limit " +
                                         std::to_string((nx - 1) / 2));
      need(trunc.M <= (ny - 1) / 2, "truncation M=" + std::to_string(trunc.M) + " exceeds the y-grid Nyquist limit " +
                                         std::to_string((ny - 1) / 2));
    }
    need(divergence_factor > 1.0, "divergence_factor must be > 1");
    need(snapshot_every >= 0, "snapshot_every must be >= 0");
    need(std::abs(slice_y) <= rect.l && std::abs(slice_x) <= rect.L, "slice positions must lie inside the rectangle");
  }
};

/// One Peaceman-Rachford step for u_t = u_xx + u_yy + r u with the reaction split half
/// per sweep and weight theta on the implicit half of each sweep. x = +-L are zero;
/// y = +-l take the supplied rows at the new time level.
class AdiStepper {
 public:
  AdiStepper() = default;
  AdiStepper(const Grid2D& g, double dt, double reaction, double theta) : g_(g), dt_(dt), r_(reaction), th_(theta) {
    g.validate();
    require(dt > 0.0 && theta >= 0.5 && theta <= 1.0, "AdiStepper: invalid dt or theta");
    const double hx = g.dx(), hy = g.dy();
    ax_ = th_ * dt / (hx * hx);
    ay_ = th_ * dt / (hy * hy);
    ex_ = (1.0 - th_) * dt / (hx * hx);
    ey_ = (1.0 - th_) * dt / (hy * hy);
    er_ = (1.0 - th_) * dt * 0.5 * r_;
    factor(g.nx - 2, 1.0 + 2.0 * ax_ - th_ * dt * 0.5 * r_, -ax_, cx_, dx_);
    factor(g.ny - 2, 1.0 + 2.0 * ay_ - th_ * dt * 0.5 * r_, -ay_, cy_, dy_);
    star_ = Field2D(g);
    rhs_.resize(std::max(g.nx, g.ny));
  }

  double dt() const { return dt_; }
  double theta() const { return th_; }

  void step(Field2D& u, std::span<const double> bc_top, std::span<const double> bc_bottom) {
    const int nx = g_.nx, ny = g_.ny;
    require(u.grid() == g_, "AdiStepper: grid mismatch");
    require(static_cast<int>(bc_top.size()) == nx && static_cast<int>(bc_bottom.size()) == nx, "AdiStepper: boundary row length");

    // x-implicit sweep on interior rows.
    for (int j = 1; j < ny - 1; ++j) {
      const auto um = u.row(j - 1), u0 = u.row(j), up = u.row(j + 1);
      for (int i = 1; i < nx - 1; ++i) rhs_[i - 1] = u0[i] + ey_ * (um[i] - 2.0 * u0[i] + up[i]) + er_ * u0[i];
      solve(nx - 2, -ax_, cx_, dx_);
      auto s = star_.row(j);
      s[0] = 0.0;
      s[nx - 1] = 0.0;
      for (int i = 1; i < nx - 1; ++i) s[i] = rhs_[i - 1];
    }
    // y-implicit sweep on interior columns; boundary rows enter at the new level.
    for (int i = 1; i < nx - 1; ++i) {
      for (int j = 1; j < ny - 1; ++j) {
        const double c = star_.at(i, j);
        rhs_[j - 1] = c + ex_ * (star_.at(i - 1, j) - 2.0 * c + star_.at(i + 1, j)) + er_ * c;
      }
      rhs_[0] += ay_ * bc_bottom[i];
      rhs_[ny - 3] += ay_ * bc_top[i];
      solve(ny - 2, -ay_, cy_, dy_);
      for (int j = 1; j < ny - 1; ++j) u.at(i, j) = rhs_[j - 1];
    }
    for (int j = 1; j < ny - 1; ++j) {
      u.at(0, j) = 0.0;
      u.at(nx - 1, j) = 0.0;
    }
    auto top = u.row(ny - 1), bot = u.row(0);
    for (int i = 0; i < nx; ++i) {
      top[i] = bc_top[i];
      bot[i] = bc_bottom[i];
    }
    top[0] = top[nx - 1] = bot[0] = bot[nx - 1] = 0.0;
  }

 private:
  /// Thomas factorization of the constant tridiagonal matrix (off, diag, off).
  static void factor(int n, double diag, double off, std::vector<double>& c, std::vector<double>& inv) {
    c.assign(n, 0.0);
    inv.assign(n, 0.0);
    double prev = 0.0;
    for (int k = 0; k < n; ++k) {
      const double den = diag - off * prev;
      inv[k] = 1.0 / den;
      c[k] = off * inv[k];
      prev = c[k];
    }
  }

  void solve(int n, double off, const std::vector<double>& c, const std::vector<double>& inv) {
    double prev = 0.0;
    for (int k = 0; k < n; ++k) {
      rhs_[k] = (rhs_[k] - off * prev) * inv[k];
      prev = rhs_[k];
    }
    for (int k = n - 2; k >= 0; --k) rhs_[k] -= c[k] * rhs_[k + 1];
  }

  Grid2D g_;
  double dt_ = 0.0, r_ = 0.0, th_ = 0.5;
  double ax_ = 0.0, ay_ = 0.0, ex_ = 0.0, ey_ = 0.0, er_ = 0.0;
  std::vector<double> cx_, dx_, cy_, dy_, rhs_;
  Field2D star_;
};

/// Functional form of one diffusion step.
inline Field2D step_diffusion(const Field2D& u, std::span<const double> bc_top, std::span<const double> bc_bottom,
                              const SimConfig& cfg) {
  AdiStepper st(u.grid(), cfg.dt, cfg.lambda, cfg.theta_w);
  Field2D out = u;
  st.step(out, bc_top, bc_bottom);
  return out;
}

/// In-place characteristic shift v(x, s, t+dt) = v(x, s+dt, t); the s = tau row becomes new_row.
inline void shift_transport(DelayField& v, std::span<const double> new_row) {
  require(static_cast<int>(new_row.size()) == v.nx(), "step_transport: row length mismatch");
  const std::size_t nx = v.nx();
  auto& d = v.data();
  std::copy(d.begin() + nx, d.end(), d.begin());
  std::copy(new_row.begin(), new_row.end(), d.end() - nx);
}

inline DelayField step_transport(const DelayField& v, std::span<const double> new_row) {
  DelayField out = v;
  shift_transport(out, new_row);
  return out;
}

struct NormSample {
  double t = 0.0;
  double u_L2 = 0.0;
  double v1_H1 = 0.0;
  double v2_H1 = 0.0;
  double U1_L2 = 0.0;
  double U2_L2 = 0.0;
};

struct Snapshot {
  int step = 0;
  double t = 0.0;
  Field2D u;
  DelayField v1, v2;
};

struct ControlSample {
  double t = 0.0;
  std::vector<double> U1, U2;
};

struct SliceSample {
  double t = 0.0;
  std::vector<double> along_x;  ///< u(x_i, slice_y, t)
  std::vector<double> along_y;  ///< u(slice_x, y_j, t)
};

/// u(x_i, y0) for every x-node, linear in y between rows.
inline std::vector<double> sample_row_at_y(const Field2D& u, double y0) {
  const auto ya = u.grid().y_axis();
  require(y0 >= ya.lo() && y0 <= ya.hi(), "sample_row_at_y: y outside the rectangle");
  const double f = (y0 - ya.lo()) / ya.step();
  const int j = std::min(static_cast<int>(std::floor(f)), u.ny() - 2);
  const double a = f - j;
  std::vector<double> out(u.nx());
  for (int i = 0; i < u.nx(); ++i) out[i] = (1.0 - a) * u.at(i, j) + a * u.at(i, j + 1);
  return out;
}

/// u(x0, y_j) for every y-node, linear in x between columns.
inline std::vector<double> sample_col_at_x(const Field2D& u, double x0) {
  const auto xa = u.grid().x_axis();
  require(x0 >= xa.lo() && x0 <= xa.hi(), "sample_col_at_x: x outside the rectangle");
  const double f = (x0 - xa.lo()) / xa.step();
  const int i = std::min(static_cast<int>(std::floor(f)), u.nx() - 2);
  const double a = f - i;
  std::vector<double> out(u.ny());
  for (int j = 0; j < u.ny(); ++j) out[j] = (1.0 - a) * u.at(i, j) + a * u.at(i + 1, j);
  return out;
}

struct RunRecord {
  SimConfig config;
  std::vector<NormSample> norms;
  std::vector<Snapshot> snapshots;
  std::vector<ControlSample> controls;
  std::vector<SliceSample> slices;
  Truncation kernel_trunc{};
  bool diverged = false;
  std::string diagnostic;
  double wall_seconds = 0.0;
};

struct InitialState {
  Field2D u0;
  DelayField v10, v20;
};

/// u0 = 2 (sin(pi x) + 1)(cos(pi y) + 1) on [-1, 1]^2 scaled to the rectangle, with the
/// x = +-L columns set to zero, and v_i0 = 0.
inline InitialState reference_initial_state(const SimConfig& cfg) {
  const auto g = cfg.grid();
  const double L = cfg.rect.L, l = cfg.rect.l;
  InitialState s{Field2D::sample(g,
                                 [&](double x, double y) {
                                   return 2.0 * (std::sin(std::numbers::pi * x / L) + 1.0) *
                                          (std::cos(std::numbers::pi * y / l) + 1.0);
                                 }),
                 DelayField(cfg.delay_grid()), DelayField(cfg.delay_grid())};
  for (int j = 0; j < g.ny; ++j) {
    s.u0.at(0, j) = 0.0;
    s.u0.at(g.nx - 1, j) = 0.0;
  }
  // cos(pi) + 1 is not exactly zero in floating point.
  for (int i = 0; i < g.nx; ++i) {
    s.u0.at(i, 0) = 0.0;
    s.u0.at(i, g.ny - 1) = 0.0;
  }
  return s;
}

namespace detail {

inline double field_scale(const Field2D& f) {
  double m = 0.0;
  for (double v : f.data()) m = std::max(m, std::abs(v));
  return m;
}

inline void check_compatibility(const Field2D& u, const DelayField& a, const DelayField& b, const char* what) {
  const double scale = std::max({field_scale(u), 1.0});
  const double tol = 1e-12 * scale;
  const int nx = u.nx(), ny = u.ny();
  for (int j = 0; j < ny; ++j)
    require(std::abs(u.at(0, j)) <= tol && std::abs(u.at(nx - 1, j)) <= tol,
            std::string(what) + ": initial field must vanish at x = +-L");
  for (int i = 0; i < nx; ++i) {
    require(std::abs(u.at(i, ny - 1) - a.at(i, 0)) <= tol, std::string(what) + ": u(x, l) must equal the first delay state at s = 0");
    require(std::abs(u.at(i, 0) - b.at(i, 0)) <= tol, std::string(what) + ": u(x, -l) must equal the second delay state at s = 0");
  }
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Open- or closed-loop cascade run. Per step: diffusion step with the delay outlets as
/// boundary rows, controller update, transport shift, norms.
inline RunRecord run_closed_loop(const SimConfig& cfg, const Field2D& u0, const DelayField& v10, const DelayField& v20) {
  cfg.validate();
  require(cfg.mode != RunMode::TARGET_ONLY, "run_closed_loop: use run_target for TARGET_ONLY");
  const auto t_start = std::chrono::steady_clock::now();
  const Grid2D g = cfg.grid();
  const DelayGrid dg = cfg.delay_grid();
  require(u0.grid() == g, "run_closed_loop: u0 grid does not match the config");
  require(v10.grid() == dg && v20.grid() == dg, "run_closed_loop: delay grids do not match the config");
  detail::check_compatibility(u0, v10, v20, "run_closed_loop");

  const bool closed = cfg.mode == RunMode::CLOSED_LOOP;
  RunRecord rec;
  rec.config = cfg;
  const int S = cfg.ns(), nx = g.nx;
  const auto xa = g.x_axis();

  std::optional<ControllerGains> gains;
  ControlHistory hist;
  if (closed) {
    gains.emplace(make_controller_gains(cfg.lambda, g, cfg.tau, cfg.dt, cfg.trunc, cfg.trace_sign));
    rec.kernel_trunc = {gains->modes(), gains->kernels().op1.y_modes()};
    hist = ControlHistory::from_initial(gains->x_table(), v10, v20, cfg.dt);
  }

  Field2D u = u0;
  DelayField v1 = v10, v2 = v20;
  std::vector<double> zero(nx, 0.0);
  ControlRows U{zero, zero};
  if (closed) {
    U = compute_U(u, hist, *gains, 0.0);
    hist.push(U.U1, U.U2, 0.0);
  } else {
    U = {std::vector<double>(v1.row(S).begin(), v1.row(S).end()), std::vector<double>(v2.row(S).begin(), v2.row(S).end())};
  }
  auto r1 = v1.row(S), r2 = v2.row(S);
  std::copy(U.U1.begin(), U.U1.end(), r1.begin());
  std::copy(U.U2.begin(), U.U2.end(), r2.begin());

  const double u0norm = norm_L2_field(u0);
  auto record = [&](int k) {
    const double t = k * cfg.dt;
    rec.norms.push_back({t, norm_L2_field(u), norm_H1_delay(v1), norm_H1_delay(v2), norm_L2_row(U.U1, xa), norm_L2_row(U.U2, xa)});
    if (k == 0 || (cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0)) rec.snapshots.push_back({k, t, u, v1, v2});
    if (cfg.record_controls) rec.controls.push_back({t, U.U1, U.U2});
    if (cfg.record_slices) rec.slices.push_back({t, sample_row_at_y(u, cfg.slice_y), sample_col_at_x(u, cfg.slice_x)});
  };
  record(0);

  AdiStepper main(g, cfg.dt, cfg.lambda, cfg.theta_w);
  AdiStepper damp;
  if (cfg.damping_steps > 0) damp = AdiStepper(g, cfg.dt, cfg.lambda, 1.0);

  const int steps = cfg.steps();
  for (int k = 0; k < steps; ++k) {
    const std::vector<double> top(v1.row(1).begin(), v1.row(1).end());
    const std::vector<double> bot(v2.row(1).begin(), v2.row(1).end());
    (k < cfg.damping_steps ? damp : main).step(u, top, bot);
    const double t = (k + 1) * cfg.dt;
    if (closed) {
      U = compute_U(u, hist, *gains, t);
      hist.push(U.U1, U.U2, t);
    } else {
      U = {zero, zero};
    }
    shift_transport(v1, U.U1);
    shift_transport(v2, U.U2);
    record(k + 1);
    const double nu = rec.norms.back().u_L2;
    if (!std::isfinite(nu) || nu > cfg.divergence_factor * std::max(u0norm, 1e-300)) {
      rec.diverged = true;
      double last = 0.0;
      for (auto it = rec.norms.rbegin(); it != rec.norms.rend(); ++it)
        if (std::isfinite(it->u_L2)) {
          last = it->u_L2;
          break;
        }
      rec.diagnostic = "divergence at t=" + std::to_string(t) + ", last finite ||u||=" + std::to_string(last);
      break;
    }
  }
  rec.wall_seconds = detail::seconds_since(t_start);
  return rec;
}

/// Target cascade: heat equation in w with boundary rows z_i(x, 0, t) and autonomous
/// transport of z_i with zero inlet. Snapshot fields u, v1, v2 hold w, z1, z2.
inline RunRecord run_target(const SimConfig& cfg, const Field2D& w0, const DelayField& z10, const DelayField& z20) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const Grid2D g = cfg.grid();
  const DelayGrid dg = cfg.delay_grid();
  require(w0.grid() == g, "run_target: w0 grid does not match the config");
  require(z10.grid() == dg && z20.grid() == dg, "run_target: delay grids do not match the config");
  detail::check_compatibility(w0, z10, z20, "run_target");

  RunRecord rec;
  rec.config = cfg;
  const int nx = g.nx;
  Field2D w = w0;
  DelayField z1 = z10, z2 = z20;
  const std::vector<double> zero(nx, 0.0);
  const double w0norm = norm_L2_field(w0);
  auto record = [&](int k) {
    const double t = k * cfg.dt;
    rec.norms.push_back({t, norm_L2_field(w), norm_H1_delay(z1), norm_H1_delay(z2), 0.0, 0.0});
    if (k == 0 || (cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0)) rec.snapshots.push_back({k, t, w, z1, z2});
    if (cfg.record_slices) rec.slices.push_back({t, sample_row_at_y(w, cfg.slice_y), sample_col_at_x(w, cfg.slice_x)});
  };
  record(0);
  AdiStepper main(g, cfg.dt, 0.0, cfg.theta_w);
  AdiStepper damp;
  if (cfg.damping_steps > 0) damp = AdiStepper(g, cfg.dt, 0.0, 1.0);
  for (int k = 0; k < cfg.steps(); ++k) {
    const std::vector<double> top(z1.row(1).begin(), z1.row(1).end());
    const std::vector<double> bot(z2.row(1).begin(), z2.row(1).end());
    (k < cfg.damping_steps ? damp : main).step(w, top, bot);
    shift_transport(z1, zero);
    shift_transport(z2, zero);
    record(k + 1);
    const double nw = rec.norms.back().u_L2;
    if (!std::isfinite(nw) || nw > cfg.divergence_factor * std::max(w0norm, 1e-300)) {
      rec.diverged = true;
      rec.diagnostic = "divergence in target run at t=" + std::to_string((k + 1) * cfg.dt);
      break;
    }
  }
  rec.wall_seconds = detail::seconds_since(t_start);
  return rec;
}

/// Exact heat evolution of a field with zero boundary values: every (n, m) coefficient
/// up to the grid Nyquist caps is multiplied by e^{-(mu_n + nu_m) elapsed}.
inline Field2D spectral_heat_oracle(const Field2D& w, double elapsed) {
  require(elapsed >= 0.0, "spectral_heat_oracle: elapsed must be >= 0");
  const double tol = 1e-10 * std::max(detail::field_scale(w), 1e-300);
  const int nx = w.nx(), ny = w.ny();
  for (int i = 0; i < nx; ++i)
    require(std::abs(w.at(i, 0)) <= tol && std::abs(w.at(i, ny - 1)) <= tol,
            "spectral_heat_oracle: boundary rows must be zero");
  for (int j = 0; j < ny; ++j)
    require(std::abs(w.at(0, j)) <= tol && std::abs(w.at(nx - 1, j)) <= tol,
            "spectral_heat_oracle: boundary columns must be zero");
  auto c = analyze_field(w);
  const auto& r = w.grid().rect;
  for (int n = 1; n <= c.N(); ++n)
    for (int m = 1; m <= c.M(); ++m) c.at(n, m) *= std::exp(-(sine_eigenvalue(n, r.L) + sine_eigenvalue(m, r.l)) * elapsed);
  return synthesize_field(c, w.grid());
}

}  // namespace bs2d
