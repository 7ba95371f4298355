// Experiment runner for the mean-field SDE engine: parses a JSON config,
// executes one command, writes CSV/JSON outputs plus a run manifest.
//
// Exit codes: 0 ok, 2 configuration error, 3 fixed-point non-convergence,
// 4 numeric blow-up.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "mfsde/io.hpp"
#include "mfsde/parallel.hpp"
#include "mfsde/run.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file")->required();
  cmd->add_option("--seed", args.seed, "RNG seed (overrides the config)");
  cmd->add_option("--workers", args.workers, "worker threads (must not affect results)");
  cmd->add_option("--out", args.out_dir, "output directory (overrides the config)");
}

mfsde::ExperimentConfig prepare(const CommonArgs& args, const std::string& command,
                                std::filesystem::path& out_dir) {
  mfsde::ExperimentConfig cfg = mfsde::load_config(args.config_path);
  if (cfg.command != command)
    throw mfsde::config_error("config: command '" + cfg.command + "' does not match subcommand '" +
                              command + "'");
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.canonical["seed"] = args.seed;
    cfg.digest = mfsde::config_digest(cfg.canonical);
  }
  if (args.workers > 0) mfsde::set_default_workers(args.workers);
  if (!args.out_dir.empty())
    out_dir = args.out_dir;
  else if (cfg.out)
    out_dir = *cfg.out;
  else
    throw mfsde::config_error("config: no output directory (set 'out' or pass --out)");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo engine for mean-field SDEs with irregular drift"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* simulate = app.add_subcommand("simulate", "solve the mean-field SDE, write the law flow");
  auto* gradient = app.add_subcommand("gradient", "estimate grad_x E[Phi(X_T^x)]");
  auto* holder = app.add_subcommand("holder-scan", "empirical continuity exponents in t and x");
  auto* validate = app.add_subcommand("validate-drift", "probe declared drift metadata");
  auto* phicheck = app.add_subcommand("phi-check", "weighted-L2 integrability quadrature for Phi");
  for (auto* cmd : {simulate, gradient, holder, validate, phicheck}) add_common(cmd, args);
  for (auto* cmd : {simulate, gradient, holder, validate, phicheck})
    cmd->callback([cmd, &args] {
      if (cmd->count("--seed") > 0) args.seed_set = true;
    });

  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::path out_dir;
    if (simulate->parsed()) {
      const auto cfg = prepare(args, "simulate", out_dir);
      mfsde::run_simulate(cfg, out_dir);
    } else if (gradient->parsed()) {
      const auto cfg = prepare(args, "gradient", out_dir);
      mfsde::run_gradient(cfg, out_dir);
    } else if (holder->parsed()) {
      const auto cfg = prepare(args, "holder-scan", out_dir);
      mfsde::run_holder_scan(cfg, out_dir);
    } else if (validate->parsed()) {
      const auto cfg = prepare(args, "validate-drift", out_dir);
      const auto result = mfsde::run_validate_drift(cfg, out_dir);
      if (result.violations > 0) {
        std::fprintf(stderr, "validate-drift: %zu metadata violation(s); see validation.json\n",
                     result.violations);
        return 2;
      }
    } else if (phicheck->parsed()) {
      const auto cfg = prepare(args, "phi-check", out_dir);
      const auto result = mfsde::run_phi_check(cfg, out_dir);
      if (!result.pass) {
        std::fprintf(stderr, "phi-check: Phi failed the integrability check; see phi_check.json\n");
        return 2;
      }
    }
    return 0;
  } catch (const mfsde::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const mfsde::picard_error& e) {
    std::fprintf(stderr, "non-convergence: %s\n", e.what());
    return 3;
  } catch (const mfsde::numeric_error& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
