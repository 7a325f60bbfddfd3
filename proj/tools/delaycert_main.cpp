// Command-line front end: certify a configured system, sweep the nominal
// delay, simulate the closed loop, or run the scalar oracle selftest.
//
// Exit codes: 0 success, 1 usage/config error, 2 infeasible at tolerance,
// 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "delaycert/experiment.hpp"

using namespace delaycert;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  int jobs = 1;
  double kappa = -1.0;
  double tol = -1.0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
  cmd->add_option("--jobs", args.jobs, "concurrent grid points for sweeps")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--kappa", args.kappa, "decay rate override");
  cmd->add_option("--tol", args.tol, "bisection tolerance override");
}

ExperimentConfig load(const CommonArgs& args) {
  ExperimentConfig cfg = parse_config_file(args.config_path);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.kappa >= 0.0) cfg.kappa = args.kappa;
  if (args.tol > 0.0) cfg.tol = args.tol;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"delay-robustness certification for predictor feedback"};
  app.require_subcommand(1);

  CommonArgs certify_args, sweep_args, sim_args, selftest_args;
  auto* certify = app.add_subcommand("certify", "maximal certified delay deviation");
  add_common(certify, certify_args);
  auto* sweep = app.add_subcommand("sweep", "delta bounds over a grid of nominal delays");
  add_common(sweep, sweep_args);
  auto* simulate = app.add_subcommand("simulate", "closed-loop trajectories to CSV");
  add_common(simulate, sim_args);
  auto* selftest = app.add_subcommand("selftest", "scalar brute-force oracle suite");
  add_common(selftest, selftest_args, /*config_required=*/false);
  int selftest_pairs = 5;
  selftest->add_option("--pairs", selftest_pairs, "number of random scalar systems");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (certify->parsed()) {
      const ExperimentConfig cfg = load(certify_args);
      const auto out = driver::run_certify(cfg);
      std::printf("D0 = %g s, kappa = %g\n", cfg.D0, cfg.kappa);
      std::printf("  delta_lmi       = %.4f%s\n", out.delta_lmi,
                  out.indeterminate_seen ? "  (some probes indeterminate)" : "");
      if (out.delta_star_value)
        std::printf("  delta_star      = %.4f\n", *out.delta_star_value);
      else
        std::printf("  delta_star      = n/a (kappa outside the admissible range)\n");
      std::printf("  delta_E         = %.4f\n", out.delta_E_value);
      std::printf("  delta_smallgain = %.4f  (M = %.4f, mu = %.4f)\n", out.delta_smallgain,
                  out.envelope.M_const, out.envelope.mu);
      if (out.record.duplicate)
        std::printf("note: identical config already recorded in the ledger\n");
      return out.exit_code;
    }
    if (sweep->parsed()) {
      const ExperimentConfig cfg = load(sweep_args);
      const auto out = driver::run_sweep(cfg, sweep_args.jobs);
      std::printf("wrote %s (%zu points, %d with empty cells)\n", out.csv_path.c_str(),
                  out.rows.size(), out.failures);
      return out.exit_code;
    }
    if (simulate->parsed()) {
      const ExperimentConfig cfg = load(sim_args);
      const auto out = driver::run_simulate(cfg);
      for (const auto& f : out.files) std::printf("wrote %s\n", f.c_str());
      if (out.exit_code == 0)
        std::printf("fitted decay rate = %.4f 1/s\n", out.fitted_rate);
      else
        std::printf("simulation diverged; see the ledger record\n");
      return out.exit_code;
    }
    if (selftest->parsed()) {
      const auto out = driver::run_selftest(selftest_pairs, 10, 2024, &std::cerr);
      std::printf("scalar oracle suite: %d pairs, %d disagreements outside the frontier band\n",
                  out.pairs, out.disagreements);
      return out.exit_code;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const PreconditionError& e) {
    std::fprintf(stderr, "precondition error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
