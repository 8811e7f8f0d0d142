#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "riftlab/experiment.hpp"

using namespace riftlab;

namespace {

namespace fs = std::filesystem;

std::string write_temp(const std::string& name, const std::string& text) {
  const fs::path path = fs::temp_directory_path() / name;
  std::ofstream out(path);
  REQUIRE(out.good());
  out << text;
  return path.string();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

// Six-state environment with one hazard; small enough that a full sweep is a
// few milliseconds per cell.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.grid_file = write_temp("riftlab_tiny.grid", "S..\n.XG\n");
  cfg.slip_prob = 0.1;
  cfg.gamma = 0.9;
  cfg.alpha_expert = 0.1;
  cfg.omega_list = {0.0, 0.01};
  cfg.b_list = {0.05, 10.0};
  cfg.prior.demos = 3;
  cfg.rounds = 3;
  cfg.episodes_per_round = 5;
  cfg.max_horizon = 20;
  cfg.eval_episodes = 50;
  cfg.seeds = {1, 2};
  return cfg;
}

bool rows_equal(const SweepRow& a, const SweepRow& b) {
  return a.run_id == b.run_id && a.seed == b.seed && a.omega == b.omega && a.b == b.b &&
         a.metrics.round == b.metrics.round &&
         a.metrics.success_rate == b.metrics.success_rate &&
         a.metrics.mean_return == b.metrics.mean_return &&
         a.metrics.intervention_rate == b.metrics.intervention_rate &&
         a.metrics.kl_to_prior == b.metrics.kl_to_prior &&
         a.metrics.dataset_size == b.metrics.dataset_size;
}

}  // namespace

TEST_CASE("a sweep covers the omega/B/seed cross product in config order") {
  const ExperimentConfig cfg = tiny_config();
  const SweepResult result = run_experiment(cfg);

  const std::size_t rows_per_run = static_cast<std::size_t>(cfg.rounds) + 1;
  REQUIRE(result.rows.size() ==
          cfg.omega_list.size() * cfg.b_list.size() * cfg.seeds.size() * rows_per_run);

  std::size_t i = 0;
  for (double omega : cfg.omega_list)
    for (double b : cfg.b_list)
      for (std::uint64_t seed : cfg.seeds) {
        long last_size = 0;
        for (int round = 0; round <= cfg.rounds; ++round, ++i) {
          const SweepRow& row = result.rows[i];
          CHECK(row.run_id == run_id_for(omega, b, seed));
          CHECK(row.omega == omega);
          CHECK(row.b == b);
          CHECK(row.seed == seed);
          CHECK(row.metrics.round == round);
          // data accumulates across rounds by default
          CHECK(row.metrics.dataset_size >= last_size);
          last_size = row.metrics.dataset_size;
          if (round == 0) {
            CHECK(row.metrics.dataset_size == 0);
            // round 0 of an anchored run evaluates the prior itself
            if (omega > 0.0) CHECK(row.metrics.kl_to_prior == 0.0);
          }
        }
      }
  CHECK(run_id_for(0.01, 0.05, 3) == "w0.01_B0.05_s3");
}

TEST_CASE("parallel sweeps reproduce the serial rows exactly") {
  const ExperimentConfig cfg = tiny_config();
  const SweepResult serial = run_experiment(cfg, 1);
  const SweepResult parallel = run_experiment(cfg, 4);
  REQUIRE(parallel.rows.size() == serial.rows.size());
  for (std::size_t i = 0; i < serial.rows.size(); ++i)
    CHECK(rows_equal(serial.rows[i], parallel.rows[i]));
}

TEST_CASE("report writes the three csv files with stable headers") {
  ExperimentConfig cfg = tiny_config();
  cfg.omega_list = {0.01};
  cfg.seeds = {1, 2};
  const SweepResult result = run_experiment(cfg);
  const fs::path dir = fresh_dir("riftlab_report");
  report(result, dir.string());

  const std::string metrics = read_file(dir / "metrics.csv");
  const std::string curves = read_file(dir / "learning_curves.csv");
  const std::string summary = read_file(dir / "summary.csv");

  CHECK(metrics.rfind("run_id,seed,omega,B,round,success_rate,mean_return,"
                      "intervention_rate,kl_to_prior,dataset_size\n", 0) == 0);
  CHECK(curves.rfind("run_id,seed,omega,B,round,metric,value\n", 0) == 0);
  CHECK(summary.rfind("omega,B,round,seeds,success_rate_mean,success_rate_stderr,"
                      "mean_return_mean,mean_return_stderr,intervention_rate_mean,"
                      "intervention_rate_stderr,kl_to_prior_mean,kl_to_prior_stderr,"
                      "dataset_size_mean,dataset_size_stderr\n", 0) == 0);

  auto lines = [](const std::string& text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  };
  CHECK(lines(metrics) == 1 + result.rows.size());
  CHECK(lines(curves) == 1 + 5 * result.rows.size());  // five metrics per row
  CHECK(lines(summary) == 1 + cfg.omega_list.size() * cfg.b_list.size());

  // independent rerun of the same config produces identical bytes
  const fs::path dir2 = fresh_dir("riftlab_report2");
  report(run_experiment(cfg, 2), dir2.string());
  CHECK(read_file(dir2 / "metrics.csv") == metrics);
  CHECK(read_file(dir2 / "learning_curves.csv") == curves);
  CHECK(read_file(dir2 / "summary.csv") == summary);
}

TEST_CASE("final-round summaries aggregate over seeds") {
  const ExperimentConfig cfg = tiny_config();
  const SweepResult result = run_experiment(cfg);
  const std::vector<CellSummary> summaries = summarize_final_round(result);
  REQUIRE(summaries.size() == cfg.omega_list.size() * cfg.b_list.size());

  for (const CellSummary& s : summaries) {
    CHECK(s.round == cfg.rounds);
    CHECK(s.num_seeds == static_cast<int>(cfg.seeds.size()));
    double sum = 0.0;
    int n = 0;
    for (const SweepRow& row : result.rows)
      if (row.omega == s.omega && row.b == s.b && row.metrics.round == cfg.rounds) {
        sum += row.metrics.success_rate;
        ++n;
      }
    REQUIRE(n == s.num_seeds);
    CHECK(s.success_mean == sum / n);
  }

  ExperimentConfig single = cfg;
  single.seeds = {7};
  for (const CellSummary& s : summarize_final_round(run_experiment(single))) {
    CHECK(s.num_seeds == 1);
    CHECK(s.success_stderr == 0.0);  // no spread to estimate from one seed
  }
}

TEST_CASE("round-0 rows of anchored runs report the prior's success") {
  const ExperimentConfig cfg = tiny_config();
  const SweepResult result = run_experiment(cfg);
  double sum = 0.0;
  int n = 0;
  for (const SweepRow& row : result.rows)
    if (row.metrics.round == 0 && row.omega > 0.0) {
      sum += row.metrics.success_rate;
      ++n;
    }
  REQUIRE(n > 0);
  CHECK(prior_success_from(result) == sum / n);

  ExperimentConfig rlif_only = cfg;
  rlif_only.omega_list = {0.0};
  CHECK_THROWS_AS(prior_success_from(run_experiment(rlif_only)), std::invalid_argument);
}

TEST_CASE("a termination-mode config trains through the fitted path") {
  ExperimentConfig cfg = tiny_config();
  cfg.bootstrap_mode = BootstrapMode::termination;
  cfg.omega_list = {0.0, 0.01};
  const SweepResult result = run_experiment(cfg, 2);
  CHECK(result.rows.size() ==
        cfg.omega_list.size() * cfg.b_list.size() * cfg.seeds.size() *
            static_cast<std::size_t>(cfg.rounds + 1));
}

TEST_CASE("fresh-data rounds fit each round's collection alone") {
  ExperimentConfig cfg = tiny_config();
  cfg.fresh_data_per_round = true;
  cfg.omega_list = {0.01};
  cfg.seeds = {1};
  const SweepResult result = run_experiment(cfg);
  const long cap = static_cast<long>(cfg.episodes_per_round) * cfg.max_horizon;
  for (const SweepRow& row : result.rows)
    if (row.metrics.round > 0) CHECK(row.metrics.dataset_size <= cap);
}

TEST_CASE("calibration rejects an expert with no advantage gaps") {
  ExperimentConfig cfg;
  // goals on all four sides: every action from the start is equally good
  cfg.grid_file = write_temp("riftlab_indiff.grid", "#G#\nGSG\n#G#\n");
  cfg.omega_list = {0.001};
  cfg.b_list = {0.1};
  cfg.rounds = 2;
  cfg.episodes_per_round = 5;
  cfg.eval_episodes = 20;
  cfg.max_horizon = 10;
  cfg.seeds = {1};
  CHECK_THROWS_WITH(calibrate_thresholds(cfg),
                    Catch::Matchers::ContainsSubstring("indifferent"));
}

TEST_CASE("the pinned sweep export stays byte-identical") {
  ExperimentConfig cfg = tiny_config();
  cfg.omega_list = {0.01};
  cfg.b_list = {0.05};
  cfg.seeds = {1};
  const fs::path dir = fresh_dir("riftlab_golden");
  report(run_experiment(cfg), dir.string());
  const fs::path golden = fs::path(RIFTLAB_SOURCE_DIR) / "tests" / "golden" / "sweep_metrics.csv";
  CHECK(read_file(dir / "metrics.csv") == read_file(golden));
}
