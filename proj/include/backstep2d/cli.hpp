#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "controller.hpp"
#include "io.hpp"
#include "kernels.hpp"
#include "simulator.hpp"
#include "transforms.hpp"

namespace bs2d::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kPropertyFailure = 3, kDivergence = 4 };

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- shared pieces

/// Closed-loop initial state of the reference experiment: u0, v_i0 = 0 except the s = tau row,
/// which holds U(0).
inline InitialState closed_loop_initial_state(const SimConfig& base) {
  SimConfig c = base;
  c.mode = RunMode::CLOSED_LOOP;
  c.t_end = 0.0;
  c.snapshot_every = 0;
  c.record_controls = c.record_slices = false;
  auto s = reference_initial_state(c);
  auto r = run_closed_loop(c, s.u0, s.v10, s.v20);
  return {r.snapshots.front().u, r.snapshots.front().v1, r.snapshots.front().v2};
}

struct TargetInitial {
  Field2D w0;
  DelayField z10, z20;
};

inline TargetInitial transform_state(const SimConfig& c, const Field2D& u, const DelayField& v1, const DelayField& v2,
                                     const TransformKernels& K) {
  const ClosedFormKernel p{KernelForm::P, c.lambda, c.rect};
  return {forward_w(u, p), forward_z(1, v1, v2, u, K), forward_z(2, v1, v2, u, K)};
}

inline double relative_l2(const Field2D& a, const Field2D& b) {
  double num = 0.0;
  Field2D d = a;
  for (std::size_t i = 0; i < d.data().size(); ++i) d.data()[i] -= b.data()[i];
  num = integral_sq(d);
  const double den = integral_sq(b);
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Closed-loop vs target comparison on the snapshot times of `c`.
struct OracleComparison {
  double spacetime_relative = 0.0;  ///< sqrt(sum ||Tw - w||^2 / sum ||w||^2) over snapshots
  double z_relative = 0.0;          ///< same for z1, z2 against the shifted initial data
  double z_flush = 0.0;             ///< max ||z(t)|| / ||z0|| over snapshots with t > tau + 2 dt
  int snapshots = 0;
};

inline OracleComparison compare_closed_loop_with_target(SimConfig c) {
  c.mode = RunMode::CLOSED_LOOP;
  if (c.snapshot_every <= 0) c.snapshot_every = std::max(1, static_cast<int>(std::lround(0.1 / c.dt)));
  c.record_controls = c.record_slices = false;
  const auto s = reference_initial_state(c);
  const auto cl = run_closed_loop(c, s.u0, s.v10, s.v20);
  require(!cl.diverged, "closed-loop run diverged: " + cl.diagnostic);
  const auto K = make_forward_kernels(c.lambda, c.grid(), c.delay_grid(), c.trunc, c.trace_sign);
  const auto& s0 = cl.snapshots.front();
  const auto t0 = transform_state(c, s0.u, s0.v1, s0.v2, K);
  const auto tg = run_target(c, t0.w0, t0.z10, t0.z20);
  require(tg.snapshots.size() == cl.snapshots.size(), "snapshot count mismatch");

  OracleComparison out;
  double wn = 0, wd = 0, zn = 0, zd = 0;
  const double z0 = std::sqrt(weighted_H1_sq(t0.z10, 0.0) + weighted_H1_sq(t0.z20, 0.0));
  for (std::size_t k = 0; k < cl.snapshots.size(); ++k) {
    const auto& a = cl.snapshots[k];
    const auto& b = tg.snapshots[k];
    const auto tr = transform_state(c, a.u, a.v1, a.v2, K);
    Field2D dw = tr.w0;
    for (std::size_t i = 0; i < dw.data().size(); ++i) dw.data()[i] -= b.u.data()[i];
    wn += integral_sq(dw);
    wd += integral_sq(b.u);
    double zsq = 0.0;
    for (int i = 1; i <= 2; ++i) {
      DelayField dz = i == 1 ? tr.z10 : tr.z20;
      const auto& ref = i == 1 ? b.v1 : b.v2;
      for (std::size_t q = 0; q < dz.data().size(); ++q) dz.data()[q] -= ref.data()[q];
      zn += norm_L2_delay(dz) * norm_L2_delay(dz);
      zd += norm_L2_delay(ref) * norm_L2_delay(ref);
      zsq += weighted_H1_sq(i == 1 ? tr.z10 : tr.z20, 0.0);
    }
    if (a.t > c.tau + 2.0 * c.dt + 1e-12 && z0 > 0.0) out.z_flush = std::max(out.z_flush, std::sqrt(zsq) / z0);
  }
  out.spacetime_relative = wd > 0.0 ? std::sqrt(wn / wd) : 0.0;
  out.z_relative = zd > 0.0 ? std::sqrt(zn / zd) : 0.0;
  out.snapshots = static_cast<int>(cl.snapshots.size());
  return out;
}

struct RoundtripStudy {
  std::vector<double> dy;
  std::vector<double> forward_inverse;  ///< u -> w -> u
  std::vector<double> inverse_forward;  ///< w -> u -> w
  double ratio(const std::vector<double>& e, std::size_t i) const { return e[i - 1] / e[i]; }
};

/// Roundtrip errors of the plant transforms on random band-limited fields at ny = 2/dy + 1.
inline RoundtripStudy roundtrip_study(double lambda, const RectangleSpec& r, const std::vector<double>& dys, std::uint64_t seed,
                                      int nx = 21) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  constexpr int B = 4;
  std::vector<double> a(B * B);
  for (int n = 1; n <= B; ++n)
    for (int m = 1; m <= B; ++m) a[(n - 1) * B + (m - 1)] = nd(rng) / (n * m);
  const ClosedFormKernel p{KernelForm::P, lambda, r}, q{KernelForm::Q, lambda, r};
  RoundtripStudy st;
  for (double dy : dys) {
    const int ny = static_cast<int>(std::lround(2.0 * r.l / dy)) + 1;
    const Grid2D g{r, nx, ny};
    const auto f = Field2D::sample(g, [&](double x, double y) {
      double s = 0.0;
      for (int n = 1; n <= B; ++n)
        for (int m = 1; m <= B; ++m) s += a[(n - 1) * B + (m - 1)] * eval_phi_x(n, x, r) * eval_phi_y(m, y, r);
      return s;
    });
    st.dy.push_back(dy);
    st.forward_inverse.push_back(relative_l2(inverse_u(forward_w(f, p), q), f));
    st.inverse_forward.push_back(relative_l2(forward_w(inverse_u(f, q), p), f));
  }
  return st;
}

/// max |gamma_2(x, theta, s, xi) - gamma_1(x, theta, s, -xi)| / max |gamma_1| over random points.
inline double mirror_symmetry_error(const SimConfig& c, std::uint64_t seed, int points = 200) {
  const auto g1 = grid_series_kernel(SeriesKind::GAMMA1, c.lambda, c.grid(), c.delay_grid(), c.trunc);
  const auto g2 = grid_series_kernel(SeriesKind::GAMMA2, c.lambda, c.grid(), c.delay_grid(), c.trunc);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-c.rect.L, c.rect.L), uy(-c.rect.l, c.rect.l), us(c.dt, c.tau);
  double err = 0.0, scale = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = ux(rng), th = ux(rng), s = us(rng), xi = uy(rng);
    const double a = eval_gamma(g1, x, th, s, -xi), b = eval_gamma(g2, x, th, s, xi);
    err = std::max(err, std::abs(a - b));
    scale = std::max(scale, std::abs(a));
  }
  return scale > 0.0 ? err / scale : err;
}

/// max |forward_z(inverse_v(z)) - z| / max |z| for a random compatible target state.
inline double z_composition_error(const SimConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto ts = random_target_state(c.grid(), c.delay_grid(), rng);
  const auto Ki = make_inverse_kernels(c.lambda, c.grid(), c.delay_grid(), c.trunc, c.trace_sign);
  const auto Kf = make_forward_kernels(c.lambda, c.grid(), c.delay_grid(), c.trunc, c.trace_sign);
  const ClosedFormKernel q{KernelForm::Q, c.lambda, c.rect};
  const Field2D u = inverse_u(ts.w, q);
  const DelayField v1 = inverse_v(1, ts.z1, ts.z2, ts.w, Ki), v2 = inverse_v(2, ts.z1, ts.z2, ts.w, Ki);
  const DelayField z1 = forward_z(1, v1, v2, u, Kf), z2 = forward_z(2, v1, v2, u, Kf);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < z1.data().size(); ++i) {
    num = std::max({num, std::abs(z1.data()[i] - ts.z1.data()[i]), std::abs(z2.data()[i] - ts.z2.data()[i])});
    den = std::max({den, std::abs(ts.z1.data()[i]), std::abs(ts.z2.data()[i])});
  }
  return den > 0.0 ? num / den : num;
}

struct WeakLimitStudy {
  std::vector<double> s;
  std::vector<double> error;
  bool monotone = true;
  double slope = 0.0;  ///< log-log slope of error against s over the last two samples
};

inline WeakLimitStudy weak_limit_study(const SimConfig& c, const std::vector<double>& s_seq) {
  const auto k = grid_series_kernel(SeriesKind::GAMMA1, c.lambda, c.grid(), c.delay_grid(), c.trunc);
  const auto& r = c.rect;
  WeakLimitStudy st;
  st.s = s_seq;
  st.error = weak_limit_test(
      k, [&](double t) { return eval_phi_x(1, t, r); }, [&](double xi) { return eval_phi_y(1, xi, r); }, 0.0, s_seq);
  for (std::size_t i = 1; i < st.error.size(); ++i)
    if (!(st.error[i] < st.error[i - 1])) st.monotone = false;
  const std::size_t n = st.error.size();
  if (n >= 2 && st.error[n - 1] > 0.0 && st.error[n - 2] > 0.0)
    st.slope = std::log(st.error[n - 2] / st.error[n - 1]) / std::log(st.s[n - 2] / st.s[n - 1]);
  return st;
}

inline PdeResidualReport kernel_residual_study(const SimConfig& c, double h = 0.02) {
  const auto k = grid_series_kernel(SeriesKind::GAMMA1, c.lambda, c.grid(), c.delay_grid(), c.trunc);
  const double L = c.rect.L, l = c.rect.l;
  const std::vector<ResidualProbe> probes{{0.3 * L, -0.2 * L, 0.4 * l}, {-0.5 * L, 0.1 * L, -0.6 * l}, {0.0, 0.45 * L, 0.1 * l}};
  const std::vector<double> s{0.05, 0.1, 0.25, 0.5, 1.0};
  return kernel_pde_residual(k, probes, s, h);
}

// ---------------------------------------------------------------- commands

inline json manifest_base(const AppConfig& cfg, const std::string& command) {
  return {{"command", command}, {"config", config_to_json(cfg)}, {"seed", cfg.seed}};
}

inline void finish_manifest(OutputDir& out, json m, std::chrono::steady_clock::time_point t0) {
  m["files"] = out.files();
  m["timings"] = {{"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  std::ofstream f(out.root() / "manifest.json");
  f << m.dump(2) << '\n';
  if (!f) throw std::runtime_error("cannot write manifest.json");
}

/// Coefficient dump plus kernel checks (PDE residual order, weak limit, mirror symmetry).
inline int cmd_kernels(const AppConfig& cfg, const fs::path& dir, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.sim.validate();
  OutputDir out(dir);
  const std::string coeffs = kernel_coefficients_csv(cfg.sim);
  const std::string sha = out.write("kernel_coefficients.csv", coeffs);

  const auto res = kernel_residual_study(cfg.sim);
  const auto wl = weak_limit_study(cfg.sim, {0.1, 0.05, 0.02, 0.01, 0.005});
  const double mirror = mirror_symmetry_error(cfg.sim, cfg.seed);
  const bool res_ok = res.order >= 1.8;
  const bool mirror_ok = mirror <= 1e-10;
  const bool ok = res_ok && wl.monotone && mirror_ok;

  json checks = {{"pde_residual", {{"order", res.order}, {"coarse", res.residual_coarse}, {"fine", res.residual_fine},
                                   {"richardson", res.residual_richardson}, {"scale", res.scale}, {"pass", res_ok}}},
                 {"weak_limit", {{"s", wl.s}, {"error", wl.error}, {"monotone", wl.monotone}, {"slope", wl.slope}, {"pass", wl.monotone}}},
                 {"mirror_symmetry", {{"relative_error", mirror}, {"pass", mirror_ok}}},
                 {"pass", ok}};
  out.write("kernel_checks.json", checks.dump(2) + "\n");
  log << "kernel coefficients: " << sha << '\n'
      << "pde residual order " << res.order << (res_ok ? " ok" : " FAIL") << '\n'
      << "weak limit final error " << wl.error.back() << ", slope " << wl.slope << (wl.monotone ? " monotone" : " NOT monotone")
      << '\n'
      << "mirror symmetry " << mirror << (mirror_ok ? " ok" : " FAIL") << '\n';
  json m = manifest_base(cfg, "kernels");
  m["kernel_coefficients_sha1"] = sha;
  m["pass"] = ok;
  finish_manifest(out, m, t0);
  return ok ? kOk : kPropertyFailure;
}

inline int cmd_simulate(const AppConfig& cfg, const fs::path& dir, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  SimConfig c = cfg.sim;
  c.validate();
  c.record_slices = true;
  c.record_controls = c.mode == RunMode::CLOSED_LOOP;
  if (c.snapshot_every == 0) c.snapshot_every = std::max(1, static_cast<int>(std::lround(0.5 / c.dt)));
  OutputDir out(dir);
  json m = manifest_base(cfg, "simulate");

  RunRecord rec;
  if (c.mode == RunMode::TARGET_ONLY) {
    const auto s = closed_loop_initial_state(c);
    const auto K = make_forward_kernels(c.lambda, c.grid(), c.delay_grid(), c.trunc, c.trace_sign);
    const auto t = transform_state(c, s.u0, s.v10, s.v20, K);
    rec = run_target(c, t.w0, t.z10, t.z20);
    // Spectral oracle from the first snapshot after the flush to the last snapshot.
    const Snapshot* first = nullptr;
    for (const auto& sn : rec.snapshots)
      if (sn.t >= c.tau + c.dt - 1e-12) {
        first = &sn;
        break;
      }
    if (first && !rec.diverged && &rec.snapshots.back() != first) {
      const auto& last = rec.snapshots.back();
      const double err = relative_l2(last.u, spectral_heat_oracle(first->u, last.t - first->t));
      m["spectral_oracle"] = {{"t0", first->t}, {"t1", last.t}, {"relative_error", err}};
      log << "spectral oracle relative error " << err << '\n';
    }
  } else {
    const auto s = reference_initial_state(c);
    rec = run_closed_loop(c, s.u0, s.v10, s.v20);
  }

  m["kernel_coefficients_sha1"] = c.mode == RunMode::OPEN_LOOP ? "" : out.write("kernel_coefficients.csv", kernel_coefficients_csv(c));
  out.write_with("norms.csv", [&](std::ostream& os) { write_norms_csv(os, rec); });
  out.write_with("snapshots.csv", [&](std::ostream& os) { write_snapshots_csv(os, rec); });
  out.write_with("slice_x.csv", [&](std::ostream& os) { write_slice_x_csv(os, rec); });
  out.write_with("slice_y.csv", [&](std::ostream& os) { write_slice_y_csv(os, rec); });
  if (c.mode == RunMode::CLOSED_LOOP) out.write_with("controls.csv", [&](std::ostream& os) { write_controls_csv(os, rec); });

  m["kernel_truncation"] = {rec.kernel_trunc.N, rec.kernel_trunc.M};
  m["diverged"] = rec.diverged;
  m["diagnostic"] = rec.diagnostic;
  m["run_wall_seconds"] = rec.wall_seconds;
  const auto& last = rec.norms.back();
  m["final"] = {{"t", last.t}, {"norm_u_L2", last.u_L2}};
  log << to_string(c.mode) << ": t=" << last.t << " ||u||=" << last.u_L2 << (rec.diverged ? " (diverged)" : "") << '\n';
  finish_manifest(out, m, t0);
  if (rec.diverged) {
    log << rec.diagnostic << '\n';
    return c.mode == RunMode::OPEN_LOOP ? kOk : kDivergence;
  }
  return kOk;
}

inline json report_json(const InequalityReport& r) {
  return {{"lemma", to_string(r.lemma)}, {"trials", r.trials},       {"max_ratio", r.max_ratio}, {"min_ratio", r.min_ratio},
          {"violations", r.violations}, {"slack", r.slack},         {"constants", r.constants}, {"pass", r.passed()}};
}

inline json suite_lemmas(const AppConfig& cfg, bool& ok) {
  const auto& c = cfg.sim;
  LemmaSetup setup{c.lambda, c.tau, c.rect};
  json out = json::object();
  json reps = json::array();
  for (auto id : {LemmaId::L3_VOLUME, LemmaId::L3_TRACE, LemmaId::L4_X_WEIGHTED, LemmaId::L5_EDGE}) {
    const auto r = verify_lemma_bound(id, setup, 100, cfg.seed);
    if (!r.passed()) ok = false;
    reps.push_back(report_json(r));
  }
  out["lemmas"] = reps;
  const auto eq = verify_lemma_bound(LemmaId::L5_EDGE, setup, 100, cfg.seed);
  const bool eq_ok = std::abs(eq.max_ratio - 1.0) <= 1e-6 && std::abs(eq.min_ratio - 1.0) <= 1e-6;
  out["lemma5_equality"] = {{"max_ratio", eq.max_ratio}, {"min_ratio", eq.min_ratio}, {"pass", eq_ok}};
  ok = ok && eq_ok;

  // Norm sandwich on random compatible target states.
  LyapunovParams lp;
  std::mt19937_64 rng(cfg.seed);
  int bad = 0;
  double lo = 1e300, hi = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto st = random_target_state(c.grid(), c.delay_grid(), rng);
    const auto sw = lyapunov_sandwich(st.w, st.z1, st.z2, lp);
    lo = std::min(lo, sw.V1 / sw.V2);
    hi = std::max(hi, sw.V1 / sw.V2);
    if (!sw.lower_ok() || !sw.upper_ok()) ++bad;
  }
  const auto feas = lp.feasibility(c.rect);
  out["lyapunov_sandwich"] = {{"trials", 100},      {"violations", bad},       {"min_V1_over_V2", lo}, {"max_V1_over_V2", hi},
                              {"alpha4", 0.25},     {"beta4", 3.0 + std::exp(lp.b * c.tau)}, {"pass", bad == 0}};
  out["lyapunov_mu_feasibility"] = {{"mu", lp.mu}, {"dissipation_margin", feas.dissipation_margin},
                                    {"edge_margin", feas.edge_margin}, {"feasible", feas.feasible()}};
  ok = ok && bad == 0;

  // V1 along a target trajectory after the flush.
  SimConfig tc = c;
  tc.snapshot_every = 1;
  tc.t_end = std::min(c.t_end, c.tau + 1.0);
  tc.t_end = std::round(tc.t_end / tc.dt) * tc.dt;
  const auto st = random_target_state(tc.grid(), tc.delay_grid(), rng);
  const auto run = run_target(tc, st.w, st.z1, st.z2);
  int increases = 0;
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& sn : run.snapshots) {
    if (sn.t <= c.tau + 1e-12) continue;
    const double v = lyapunov_V1(change_of_variable_m(sn.u, sn.v1.row(0), sn.v2.row(0)), sn.v1, sn.v2, lp);
    if (v > prev * (1.0 + 1e-12)) ++increases;
    prev = v;
  }
  out["lyapunov_monotone"] = {{"increases", increases}, {"pass", increases == 0}};
  ok = ok && increases == 0;
  return out;
}

inline json suite_transforms(const AppConfig& cfg, bool& ok) {
  const auto& c = cfg.sim;
  const auto st = roundtrip_study(c.lambda, c.rect, {0.02, 0.01, 0.005}, cfg.seed);
  json out;
  bool orders_ok = true;
  json fi = json::array(), inv = json::array();
  for (std::size_t i = 0; i < st.dy.size(); ++i) {
    json a = {{"dy", st.dy[i]}, {"error", st.forward_inverse[i]}};
    json b = {{"dy", st.dy[i]}, {"error", st.inverse_forward[i]}};
    if (i > 0) {
      a["ratio"] = st.ratio(st.forward_inverse, i);
      b["ratio"] = st.ratio(st.inverse_forward, i);
      for (double r : {st.ratio(st.forward_inverse, i), st.ratio(st.inverse_forward, i)})
        if (r < 3.5 || r > 4.5) orders_ok = false;
    }
    fi.push_back(a);
    inv.push_back(b);
  }
  out["roundtrip_u_w_u"] = fi;
  out["roundtrip_w_u_w"] = inv;
  out["roundtrip_orders_pass"] = orders_ok;
  const double mirror = mirror_symmetry_error(c, cfg.seed);
  out["mirror_symmetry"] = {{"relative_error", mirror}, {"pass", mirror <= 1e-10}};

  // forward_z after inverse_v on a random compatible target state, on the config grid and
  // on a refined grid (dy/2, ds/4).
  SimConfig fine = c;
  fine.nx = 2 * c.nx - 1;
  fine.ny = 2 * c.ny - 1;
  fine.dt = c.dt / 4.0;
  fine.trunc = {};
  const double comp_base = z_composition_error(c, cfg.seed);
  const double comp = z_composition_error(fine, cfg.seed);
  out["z_composition"] = {{"config_grid", {{"nx", c.nx}, {"ny", c.ny}, {"ds", c.dt}, {"relative_max_error", comp_base}}},
                          {"refined_grid", {{"nx", fine.nx}, {"ny", fine.ny}, {"ds", fine.dt}, {"relative_max_error", comp}}},
                          {"tolerance", 1e-3},
                          {"pass", comp <= 1e-3}};

  ok = orders_ok && mirror <= 1e-10 && comp <= 1e-3;
  return out;
}

inline json suite_oracle(const AppConfig& cfg, bool& ok) {
  const auto r = compare_closed_loop_with_target(cfg.sim);
  ok = r.spacetime_relative <= 5e-2 && r.z_relative <= 5e-2;
  return {{"spacetime_relative", r.spacetime_relative}, {"z_relative", r.z_relative}, {"z_flush_relative", r.z_flush},
          {"snapshots", r.snapshots}, {"threshold", 5e-2}, {"pass", ok}};
}

inline int cmd_verify(const AppConfig& cfg, const std::string& suite, const fs::path& dir, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.sim.validate();
  bool ok = true;
  json verdict;
  if (suite == "lemmas") verdict = suite_lemmas(cfg, ok);
  else if (suite == "transforms") verdict = suite_transforms(cfg, ok);
  else if (suite == "oracle") verdict = suite_oracle(cfg, ok);
  else throw ConfigError("unknown suite '" + suite + "' (lemmas, transforms, oracle)");
  verdict["suite"] = suite;
  verdict["pass"] = ok;
  OutputDir out(dir);
  out.write("verify_" + suite + ".json", verdict.dump(2) + "\n");
  log << verdict.dump(2) << '\n';
  json m = manifest_base(cfg, "verify");
  m["suite"] = suite;
  m["pass"] = ok;
  finish_manifest(out, m, t0);
  return ok ? kOk : kPropertyFailure;
}

struct SweepPoint {
  double lambda = 0.0, tau = 0.0;
  double rate = std::numeric_limits<double>::quiet_NaN();
  bool stable = false;
  int ny = 0, refinement = 0;
  double dt = 0.0;
  std::string error;
};

constexpr double kSweepAmplificationLimit = 100.0;
constexpr int kSweepMaxRefinement = 2;

/// Growth of the slowest plant mode over one delay, e^{(lambda - mu_1 - nu_1) tau}, floored at 1.
inline double predictor_amplification(double lambda, double tau, const RectangleSpec& r) {
  return std::exp(std::max(0.0, lambda - sine_eigenvalue(1, r.L) - sine_eigenvalue(1, r.l)) * tau);
}

/// Per-point closed-loop runs over [0, tau + 2] with the rate fitted on [tau + 0.5, tau + 2].
/// Points whose predictor amplification exceeds kSweepAmplificationLimit get dy halved and
/// dt quartered per level until amplification / 16^k falls below it.
inline std::vector<SweepPoint> run_sweep(const AppConfig& cfg, const std::vector<double>& lambdas, const std::vector<double>& taus) {
  std::vector<SweepPoint> pts;
  for (double lam : lambdas)
    for (double tau : taus) {
      SweepPoint p;
      p.lambda = lam;
      p.tau = tau;
      try {
        SimConfig c = cfg.sim;
        c.lambda = lam;
        c.tau = tau;
        c.mode = RunMode::CLOSED_LOOP;
        c.snapshot_every = 0;
        c.record_controls = c.record_slices = false;
        c.trunc = {};
        c.validate();
        const double amp = predictor_amplification(lam, tau, c.rect);
        while (p.refinement < kSweepMaxRefinement && amp / std::pow(16.0, p.refinement) > kSweepAmplificationLimit) {
          ++p.refinement;
          c.ny = 2 * c.ny - 1;
          c.dt /= 4.0;
        }
        c.t_end = tau + 2.0;
        c.validate();
        p.ny = c.ny;
        p.dt = c.dt;
        const auto s = reference_initial_state(c);
        const auto r = run_closed_loop(c, s.u0, s.v10, s.v20);
        if (r.diverged) throw std::runtime_error(r.diagnostic);
        std::vector<double> t, y;
        for (const auto& n : r.norms) {
          t.push_back(n.t);
          y.push_back(n.u_L2);
        }
        p.rate = fit_decay_rate(t, y, tau + 0.5, tau + 2.0).rate;
        p.stable = p.rate > 0.0;
      } catch (const std::exception& e) {
        p.error = e.what();
      }
      pts.push_back(p);
    }
  return pts;
}

inline int cmd_sweep(const AppConfig& cfg, const std::vector<double>& lambdas, const std::vector<double>& taus, const fs::path& dir,
                     std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto pts = run_sweep(cfg, lambdas, taus);
  OutputDir out(dir);
  json errors = json::array(), resolution = json::array();
  out.write_with("sweep.csv", [&](std::ostream& os) {
    os << "lambda,tau,fitted_rate,stable\n";
    for (const auto& p : pts) {
      os << format_double(p.lambda) << ',' << format_double(p.tau) << ',' << format_double(p.rate) << ','
         << (p.stable ? "true" : "false") << '\n';
      if (!p.error.empty()) errors.push_back({{"lambda", p.lambda}, {"tau", p.tau}, {"error", p.error}});
      resolution.push_back({{"lambda", p.lambda}, {"tau", p.tau}, {"ny", p.ny}, {"dt", p.dt}, {"refinement", p.refinement}});
      log << "lambda=" << p.lambda << " tau=" << p.tau << " rate=" << p.rate << (p.stable ? " stable" : " unstable")
          << (p.error.empty() ? "" : " (" + p.error + ")") << '\n';
    }
  });
  json m = manifest_base(cfg, "sweep");
  m["lambdas"] = lambdas;
  m["taus"] = taus;
  m["errors"] = errors;
  m["resolution"] = resolution;
  finish_manifest(out, m, t0);
  return kOk;
}

}  // namespace bs2d::cli
