#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "backstep2d/cli.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string mode, grid, trunc, suite = "lemmas", out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda, tau, dt;
  std::optional<std::string> lambda_list, tau_list;
};

bs2d::AppConfig build_config(const Overrides& o) {
  bs2d::AppConfig c;
  if (!o.config.empty()) c = bs2d::load_config(o.config, c);
  auto set = [&](const char* key, const std::string& v) {
    try {
      bs2d::set_config_value(c, key, v);
    } catch (const bs2d::ConfigError& e) {
      throw bs2d::ConfigError(std::string("--") + e.what());
    }
  };
  if (!o.mode.empty()) set("mode", o.mode);
  if (!o.grid.empty()) set("grid", o.grid);
  if (!o.trunc.empty()) set("trunc", o.trunc);
  if (o.seed) c.seed = *o.seed;
  if (o.lambda) c.sim.lambda = *o.lambda;
  if (o.tau) c.sim.tau = *o.tau;
  if (o.dt) c.sim.dt = *o.dt;
  return c;
}

std::vector<double> parse_list(const std::string& flag, const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = bs2d::detail::trim(item);
    if (item.empty()) continue;
    out.push_back(bs2d::detail::parse_double(flag, item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delay-compensated boundary control of a 2-D reaction-diffusion PDE"};
  app.require_subcommand(1);
  Overrides o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--mode", o.mode, "OPEN_LOOP, CLOSED_LOOP or TARGET_ONLY");
    sub->add_option("--seed", o.seed, "random seed for property suites");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--grid", o.grid, "grid nodes NX,NY");
    sub->add_option("--dt", o.dt, "time step (equals the delay step)");
    sub->add_option("--trunc", o.trunc, "series truncation N,M (default: tail rule)");
  };
  auto* kernels = app.add_subcommand("kernels", "dump kernel coefficients and run kernel checks");
  auto* simulate = app.add_subcommand("simulate", "run the plant, closed loop or target system");
  auto* verify = app.add_subcommand("verify", "run a property suite");
  auto* sweep = app.add_subcommand("sweep", "closed-loop decay rates over lambda and tau lists");
  for (auto* s : {kernels, simulate, verify}) {
    common(s);
    s->add_option("--lambda", o.lambda, "reaction coefficient");
    s->add_option("--tau", o.tau, "input delay");
  }
  common(sweep);
  sweep->add_option("--lambda", o.lambda_list, "comma-separated lambda values");
  sweep->add_option("--tau", o.tau_list, "comma-separated delay values");
  verify->add_option("--suite", o.suite, "lemmas, transforms or oracle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : bs2d::cli::kConfigError;
  }

  try {
    const auto cfg = build_config(o);
    if (kernels->parsed()) return bs2d::cli::cmd_kernels(cfg, o.out, std::cout);
    if (simulate->parsed()) return bs2d::cli::cmd_simulate(cfg, o.out, std::cout);
    if (verify->parsed()) return bs2d::cli::cmd_verify(cfg, o.suite, o.out, std::cout);
    const auto lambdas = o.lambda_list ? parse_list("lambda", *o.lambda_list) : std::vector<double>{cfg.sim.lambda};
    const auto taus = o.tau_list ? parse_list("tau", *o.tau_list) : std::vector<double>{cfg.sim.tau};
    return bs2d::cli::cmd_sweep(cfg, lambdas, taus, o.out, std::cout);
  } catch (const bs2d::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return bs2d::cli::kConfigError;
  } catch (const bs2d::ContractError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return bs2d::cli::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
