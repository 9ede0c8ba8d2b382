#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include <openssl/evp.h>

#include "kernels.hpp"
#include "simulator.hpp"
#include "transforms.hpp"

namespace bs2d {

/// Simulation config plus the settings that only the front end uses.
struct AppConfig {
  SimConfig sim;
  std::uint64_t seed = 42;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("field '" + key + "': expected a number, got '" + v + "'");
  return d;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long d = 0;
  try {
    d = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("field '" + key + "': expected an integer, got '" + v + "'");
  return d;
}

inline std::pair<long long, long long> parse_int_pair(const std::string& key, const std::string& v) {
  const auto c = v.find(',');
  if (c == std::string::npos) throw ConfigError("field '" + key + "': expected A,B, got '" + v + "'");
  return {parse_int(key, trim(v.substr(0, c))), parse_int(key, trim(v.substr(c + 1)))};
}

}  // namespace detail

inline RunMode run_mode_from_string(const std::string& s) {
  if (s == "OPEN_LOOP" || s == "open") return RunMode::OPEN_LOOP;
  if (s == "CLOSED_LOOP" || s == "closed") return RunMode::CLOSED_LOOP;
  if (s == "TARGET_ONLY" || s == "target") return RunMode::TARGET_ONLY;
  throw ConfigError("field 'mode': unknown mode '" + s + "' (OPEN_LOOP, CLOSED_LOOP, TARGET_ONLY)");
}

/// Apply one key=value setting. Unknown keys are errors.
inline void set_config_value(AppConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  auto& s = c.sim;
  if (key == "lambda") s.lambda = parse_double(key, value);
  else if (key == "tau") s.tau = parse_double(key, value);
  else if (key == "L") s.rect.L = parse_double(key, value);
  else if (key == "l") s.rect.l = parse_double(key, value);
  else if (key == "nx") s.nx = static_cast<int>(parse_int(key, value));
  else if (key == "ny") s.ny = static_cast<int>(parse_int(key, value));
  else if (key == "grid") {
    const auto [a, b] = parse_int_pair(key, value);
    s.nx = static_cast<int>(a);
    s.ny = static_cast<int>(b);
  } else if (key == "dt") s.dt = parse_double(key, value);
  else if (key == "t_end") s.t_end = parse_double(key, value);
  else if (key == "theta_w") s.theta_w = parse_double(key, value);
  else if (key == "damping_steps") s.damping_steps = static_cast<int>(parse_int(key, value));
  else if (key == "trunc") {
    const auto [a, b] = parse_int_pair(key, value);
    s.trunc = {static_cast<int>(a), static_cast<int>(b)};
  } else if (key == "mode") s.mode = run_mode_from_string(value);
  else if (key == "trace_sign") {
    if (value == "plus") s.trace_sign = TraceSign::plus;
    else if (value == "minus") s.trace_sign = TraceSign::minus;
    else throw ConfigError("field 'trace_sign': expected plus or minus, got '" + value + "'");
  } else if (key == "divergence_factor") s.divergence_factor = parse_double(key, value);
  else if (key == "snapshot_every") s.snapshot_every = static_cast<int>(parse_int(key, value));
  else if (key == "slice_x") s.slice_x = parse_double(key, value);
  else if (key == "slice_y") s.slice_y = parse_double(key, value);
  else if (key == "seed") {
    const long long v = parse_int(key, value);
    if (v < 0) throw ConfigError("field 'seed': must be >= 0");
    c.seed = static_cast<std::uint64_t>(v);
  } else throw ConfigError("unknown field '" + key + "'");
}

/// Flat key = value file; '#' starts a comment. Errors carry the source and line.
inline AppConfig parse_config(std::istream& in, AppConfig base = {}, const std::string& source = "<config>") {
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value, got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key");
    try {
      set_config_value(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

inline AppConfig load_config(const std::filesystem::path& p, AppConfig base = {}) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open config file '" + p.string() + "'");
  return parse_config(in, base, p.string());
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline nlohmann::json config_to_json(const AppConfig& c) {
  const auto& s = c.sim;
  return {{"lambda", s.lambda},
          {"tau", s.tau},
          {"L", s.rect.L},
          {"l", s.rect.l},
          {"nx", s.nx},
          {"ny", s.ny},
          {"dt", s.dt},
          {"t_end", s.t_end},
          {"theta_w", s.theta_w},
          {"damping_steps", s.damping_steps},
          {"trunc", {s.trunc.N, s.trunc.M}},
          {"mode", to_string(s.mode)},
          {"trace_sign", s.trace_sign == TraceSign::plus ? "plus" : "minus"},
          {"divergence_factor", s.divergence_factor},
          {"snapshot_every", s.snapshot_every},
          {"slice_x", s.slice_x},
          {"slice_y", s.slice_y},
          {"seed", c.seed}};
}

// ---------------------------------------------------------------- CSV writers

inline void write_norms_csv(std::ostream& os, const RunRecord& r) {
  os << "t,norm_u_L2,norm_v1_H1,norm_v2_H1,U1_L2,U2_L2\n";
  for (const auto& n : r.norms)
    os << format_double(n.t) << ',' << format_double(n.u_L2) << ',' << format_double(n.v1_H1) << ','
       << format_double(n.v2_H1) << ',' << format_double(n.U1_L2) << ',' << format_double(n.U2_L2) << '\n';
}

inline void write_snapshots_csv(std::ostream& os, const RunRecord& r) {
  os << "t,x,y,u\n";
  for (const auto& s : r.snapshots) {
    const auto xa = s.u.grid().x_axis(), ya = s.u.grid().y_axis();
    for (int j = 0; j < s.u.ny(); ++j)
      for (int i = 0; i < s.u.nx(); ++i)
        os << format_double(s.t) << ',' << format_double(xa.node(i)) << ',' << format_double(ya.node(j)) << ','
           << format_double(s.u.at(i, j)) << '\n';
  }
}

/// u(x, slice_y, t) as t,x,u.
inline void write_slice_x_csv(std::ostream& os, const RunRecord& r) {
  const auto xa = r.config.grid().x_axis();
  os << "t,x,u\n";
  for (const auto& s : r.slices)
    for (int i = 0; i < xa.count(); ++i) os << format_double(s.t) << ',' << format_double(xa.node(i)) << ',' << format_double(s.along_x[i]) << '\n';
}

/// u(slice_x, y, t) as t,y,u.
inline void write_slice_y_csv(std::ostream& os, const RunRecord& r) {
  const auto ya = r.config.grid().y_axis();
  os << "t,y,u\n";
  for (const auto& s : r.slices)
    for (int j = 0; j < ya.count(); ++j) os << format_double(s.t) << ',' << format_double(ya.node(j)) << ',' << format_double(s.along_y[j]) << '\n';
}

inline void write_controls_csv(std::ostream& os, const RunRecord& r) {
  const auto xa = r.config.grid().x_axis();
  os << "t,x,U1,U2\n";
  for (const auto& c : r.controls)
    for (int i = 0; i < xa.count(); ++i)
      os << format_double(c.t) << ',' << format_double(xa.node(i)) << ',' << format_double(c.U1[i]) << ',' << format_double(c.U2[i])
         << '\n';
}

// ---------------------------------------------------------------- hashing and manifest

/// Git blob object id: SHA-1 of "blob <size>\0" followed by the content.
inline std::string git_blob_sha1(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("git_blob_sha1: cannot allocate digest context");
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 && EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 && EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("git_blob_sha1: digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

/// Output directory that records every file it writes.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root) : root_(std::move(root)) { std::filesystem::create_directories(root_); }

  const std::filesystem::path& root() const { return root_; }

  std::string write(const std::string& name, const std::string& content) {
    const auto path = root_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
    out.close();
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
    const std::string sha = git_blob_sha1(content);
    files_.push_back({{"name", name}, {"sha1", sha}, {"bytes", content.size()}});
    return sha;
  }

  template <class Writer>
  std::string write_with(const std::string& name, Writer&& w) {
    std::ostringstream os;
    w(os);
    return write(name, os.str());
  }

  const nlohmann::json& files() const { return files_; }

 private:
  std::filesystem::path root_;
  nlohmann::json files_ = nlohmann::json::array();
};

/// Coefficients of all four series kernels of a config, as one CSV.
inline std::string kernel_coefficients_csv(const SimConfig& cfg) {
  std::ostringstream os;
  bool header = true;
  for (auto kind : {SeriesKind::GAMMA1, SeriesKind::GAMMA2, SeriesKind::ETA1, SeriesKind::ETA2}) {
    const auto k = grid_series_kernel(kind, cfg.lambda, cfg.grid(), cfg.delay_grid(), cfg.trunc);
    write_kernel_coefficients(os, k, header);
    header = false;
  }
  return os.str();
}

}  // namespace bs2d
