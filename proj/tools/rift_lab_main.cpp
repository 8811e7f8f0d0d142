#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "riftlab/config.hpp"
#include "riftlab/experiment.hpp"
#include "riftlab/verification.hpp"

namespace {

using namespace riftlab;

std::string default_out_dir() {
  const char* env = std::getenv("RIFT_LAB_OUT");
  return env && *env ? env : "out";
}

ExperimentConfig load_config(const std::string& path, std::uint64_t seed_override,
                             bool has_seed_override) {
  ExperimentConfig cfg = load_experiment_config(path);
  if (has_seed_override) cfg.seeds = {seed_override};
  return cfg;
}

int cmd_verify() {
  const std::vector<CheckResult> results = run_verification_suite();
  bool all_pass = true;
  for (const CheckResult& r : results) {
    std::printf("%-28s instances=%-4d worst=%-11.4g %s  (%.2fs)  %s\n", r.name.c_str(),
                r.instances, r.worst, r.pass ? "PASS" : "FAIL", r.elapsed_seconds,
                r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

int cmd_solve(const ExperimentConfig& cfg) {
  const BuiltEnvironment env = build_environment(cfg);
  const TabularMdp& mdp = env.world.mdp;
  const PolicyEvalResult expert_eval =
      evaluate_policy(mdp, env.expert, cfg.eval_episodes, cfg.max_horizon, 0.5, 1, true);
  std::printf("environment: %d states, %d actions (grid %s)\n", mdp.num_states, mdp.num_actions,
              cfg.grid_file.c_str());
  std::printf("expert:      success=%.3f mean_return=%.3f\n", expert_eval.success_rate,
              expert_eval.mean_return);
  for (double b : cfg.b_list) {
    const InterventionStrategy strategy{QGapStrategy{env.expert_q, b}};
    const PolicyTable prior = build_prior(cfg, env, strategy);
    const PolicyEvalResult prior_eval =
        evaluate_policy(mdp, prior, cfg.eval_episodes, cfg.max_horizon, 0.5, 2, true);
    const double rate = intervention_rate(mdp, prior, strategy, cfg.eval_episodes,
                                          cfg.max_horizon, 3, true);
    std::printf("prior[B=%g]: success=%.3f mean_return=%.3f intervention_rate=%.3f\n", b,
                prior_eval.success_rate, prior_eval.mean_return, rate);
  }
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  const BuiltEnvironment env = build_environment(cfg);
  const double omega = cfg.omega_list.front();
  const double b = cfg.b_list.front();
  const std::uint64_t seed = cfg.seeds.front();
  const InterventionStrategy strategy{QGapStrategy{env.expert_q, b}};
  const PolicyTable prior = build_prior(cfg, env, strategy);
  const RiftResult result =
      rift_loop(env.world.mdp, prior, strategy, rift_config_from(cfg, omega, seed));
  std::printf("single run: omega=%g B=%g seed=%llu (%s)\n", omega, b,
              static_cast<unsigned long long>(seed),
              omega == 0.0 ? "intervention-only" : "residual fine-tuning");
  std::printf("%5s %12s %12s %12s %12s %12s\n", "round", "success", "return", "stop_rate",
              "kl_to_prior", "dataset");
  for (const RunMetrics& m : result.metrics)
    std::printf("%5d %12.4f %12.4f %12.4f %12.4g %12ld\n", m.round, m.success_rate,
                m.mean_return, m.intervention_rate, m.kl_to_prior, m.dataset_size);
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir, int jobs) {
  const SweepResult result = run_experiment(cfg, jobs);
  report(result, out_dir);
  std::printf("wrote %s/metrics.csv, learning_curves.csv, summary.csv (%zu rows)\n",
              out_dir.c_str(), result.rows.size());
  for (const CellSummary& s : summarize_final_round(result))
    std::printf("omega=%-8g B=%-8g final success=%.3f±%.3f stop_rate=%.3f kl=%.4g\n", s.omega,
                s.b, s.success_mean, s.success_stderr, s.rate_mean, s.kl_mean);
  return 0;
}

int cmd_failure_cases(const ExperimentConfig& cfg, int jobs) {
  for (const FailureCaseOutcome& c : run_failure_cases(cfg, jobs)) {
    std::printf("%-28s prior=%.3f tuned=%.3f", c.name.c_str(), c.prior_success, c.rift_success);
    if (c.has_rlif) std::printf(" intervention-only=%.3f", c.rlif_success);
    std::printf(" kl=%.4g\n", c.rift_kl);
  }
  return 0;
}

int cmd_calibrate(const ExperimentConfig& cfg) {
  const CalibratedThresholds t = calibrate_thresholds(cfg);
  std::printf("B_low=%.6g B_med=%.6g B_high=%.6g\n", t.b_low, t.b_med, t.b_high);
  std::printf("(suggested B_list = [%.6g, %.6g, %.6g])\n", t.b_high, t.b_med, t.b_low);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rift-lab: intervention-driven fine-tuning experiments on tabular gridworlds"};
  app.fallthrough(false);

  std::string config_path;
  std::string out_dir = default_out_dir();
  std::uint64_t seed_override = 0;
  int jobs = 1;

  CLI::App* verify_cmd = app.add_subcommand("verify", "run the numerical check suites");
  CLI::App* solve_cmd =
      app.add_subcommand("solve", "solve the expert and prior, print their success rates");
  CLI::App* train_cmd =
      app.add_subcommand("train", "train a single run (first omega/B, first or --seed seed)");
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run the full sweep and export CSV");
  CLI::App* failure_cmd =
      app.add_subcommand("failure-cases", "run the three prewired failure scenarios");
  CLI::App* calibrate_cmd =
      app.add_subcommand("calibrate", "search intervention thresholds for the success bands");

  for (CLI::App* cmd : {solve_cmd, train_cmd, sweep_cmd, failure_cmd, calibrate_cmd})
    cmd->add_option("config", config_path, "experiment config (TOML)")->required();
  for (CLI::App* cmd : {solve_cmd, train_cmd, sweep_cmd, failure_cmd})
    cmd->add_option("--seed", seed_override, "replace the config's seed list with one seed");
  sweep_cmd->add_option("--out", out_dir, "output directory (default $RIFT_LAB_OUT or ./out)");
  for (CLI::App* cmd : {sweep_cmd, failure_cmd})
    cmd->add_option("--jobs", jobs, "parallel training cells")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }

  if (app.get_subcommands().empty()) {
    std::fputs(app.help().c_str(), stdout);
    return 2;
  }

  try {
    if (verify_cmd->parsed()) return cmd_verify();
    const bool has_seed = solve_cmd->count("--seed") || train_cmd->count("--seed") ||
                          sweep_cmd->count("--seed") || failure_cmd->count("--seed");
    const ExperimentConfig cfg = load_config(config_path, seed_override, has_seed);
    if (solve_cmd->parsed()) return cmd_solve(cfg);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (sweep_cmd->parsed()) return cmd_sweep(cfg, out_dir, jobs);
    if (failure_cmd->parsed()) return cmd_failure_cases(cfg, jobs);
    if (calibrate_cmd->parsed()) return cmd_calibrate(cfg);
  } catch (const std::invalid_argument& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 2;
}
