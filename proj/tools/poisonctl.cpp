// poisonctl: simulate online data-poisoning attacks against sequential
// learners, and numerically check the planning-theory bounds behind them.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "poisonctl/poisonctl.hpp"

namespace {

namespace fs = std::filesystem;
using namespace poisonctl;

int cmd_run(const std::string& config_path,
            const std::vector<std::string>& overrides, std::size_t parallelism) {
  RunPlan plan;
  try {
    plan = load_run_plan(config_path, overrides);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  fs::create_directories(plan.out_dir);
  write_manifest((fs::path(plan.out_dir) / "manifest.cfg").string(),
                 plan.resolved);

  std::vector<EpisodeConfig> configs;
  for (std::uint64_t seed : plan.seeds) {
    for (PolicyKind policy : plan.policies) {
      EpisodeConfig cfg = plan.base;
      cfg.policy = policy;
      cfg.seed = seed;
      configs.push_back(std::move(cfg));
    }
  }
  log_info("running " + std::to_string(configs.size()) + " episodes");
  std::vector<EpisodeOutcome> outcomes = run_suite(configs, parallelism);

  std::vector<EpisodeTrace> traces;
  bool failed = false;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const EpisodeConfig& cfg = configs[i];
    if (!outcomes[i].ok) {
      failed = true;
      std::fprintf(stderr, "episode policy=%s seed=%llu failed: %s\n",
                   policy_name(cfg.policy),
                   static_cast<unsigned long long>(cfg.seed),
                   outcomes[i].error.c_str());
      continue;
    }
    std::string name = std::string("trace_") + policy_name(cfg.policy) +
                       "_seed" + std::to_string(cfg.seed) + ".csv";
    write_trace_csv((fs::path(plan.out_dir) / name).string(),
                    outcomes[i].trace);
    traces.push_back(outcomes[i].trace);
  }
  write_summary_csv((fs::path(plan.out_dir) / "summary.csv").string(), traces);
  std::printf("wrote %zu trace(s) and summary.csv to %s\n", traces.size(),
              plan.out_dir.c_str());
  return failed ? 1 : 0;
}

int cmd_theory(std::size_t N, std::size_t n, double delta, std::size_t trials,
               std::uint64_t seed, const std::string& out_dir) {
  PlanningGapParams params;
  PlanningGapReport gap_report;
  ConcentrationReport conc_report;
  try {
    gap_report = verify_planning_gap_bound(params, trials, RngStream(seed, 1));
    conc_report =
        verify_l1_concentration_bound(N, n, delta, trials, RngStream(seed, 2));
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "theory: %s\n", e.what());
    return 2;
  }

  bool gap_ok = gap_report.violations == 0;
  bool conc_ok = conc_report.coverage >= 1.0 - delta;
  std::printf(
      "planning-gap bound: %s (%zu violations in %zu trials, max gap/bound "
      "%.4f)\n",
      gap_ok ? "PASS" : "FAIL", gap_report.violations,
      gap_report.trials.size(), gap_report.max_ratio);
  std::printf(
      "empirical-L1 bound: %s (coverage %.4f vs required %.4f, bound %.6f)\n",
      conc_ok ? "PASS" : "FAIL", conc_report.coverage, 1.0 - delta,
      conc_report.bound);

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_planning_gap_csv((fs::path(out_dir) / "planning_gap.csv").string(),
                           gap_report);
    write_concentration_csv((fs::path(out_dir) / "concentration.csv").string(),
                            conc_report);
  }
  return (gap_ok && conc_ok) ? 0 : 1;
}

int cmd_ingest(const std::string& csv_path, int label_column,
               const std::string& label_map, bool header, std::size_t d_target,
               const std::string& out_path) {
  try {
    CsvOptions opts;
    opts.has_header = header;
    if (label_column >= 0) {
      opts.label_column = static_cast<std::size_t>(label_column);
    }
    opts.label_map = parse_label_map(label_map);
    std::vector<DataPoint> points = load_csv(csv_path, opts);
    points = normalize_dataset(std::move(points), d_target);
    save_csv(out_path, points);
    std::printf("wrote %zu points of dimension %zu to %s\n", points.size(),
                points.front().features.size(), out_path.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ingest: %s\n", e.what());
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online data-poisoning attack simulator"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run a configured experiment grid");
  std::string config_path;
  std::vector<std::string> overrides;
  std::size_t parallelism = 1;
  std::string out_dir;
  std::string seed_str;
  run->add_option("--config", config_path, "experiment config file")
      ->required();
  run->add_option("--override", overrides,
                  "KEY=VALUE config override (repeatable)");
  run->add_option("--parallelism", parallelism, "worker threads")
      ->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "output directory (overrides run.out)");
  run->add_option("--seed", seed_str, "single seed (overrides run.seeds)");

  // theory
  auto* theory = app.add_subcommand(
      "theory", "check the planning-gap and concentration bounds");
  std::size_t N = 4;
  std::size_t n = 1000;
  double delta = 0.05;
  std::size_t trials = 1000;
  std::uint64_t theory_seed = 0;
  std::string theory_out;
  theory->add_option("--N", N, "support size of the data distribution")
      ->check(CLI::Range(std::size_t{2}, std::size_t{64}));
  theory->add_option("--n", n, "samples per empirical estimate")
      ->check(CLI::PositiveNumber);
  theory->add_option("--delta", delta, "failure probability")
      ->check(CLI::Range(1e-9, 0.999999));
  theory->add_option("--trials", trials, "randomized trials per bound")
      ->check(CLI::PositiveNumber);
  theory->add_option("--seed", theory_seed, "rng seed");
  theory->add_option("--out", theory_out, "directory for report CSVs");

  // ingest
  auto* ingest =
      app.add_subcommand("ingest", "normalize a CSV dataset for experiments");
  std::string ingest_csv;
  int label_column = -1;
  std::string label_map;
  bool header = false;
  std::size_t d_target = 30;
  std::string ingest_out;
  ingest->add_option("csv", ingest_csv, "input CSV path")->required();
  ingest->add_option("--label-column", label_column,
                     "0-based label column index");
  ingest->add_option("--label-map", label_map,
                     "raw:mapped label pairs, e.g. 0:-1,1:1");
  ingest->add_flag("--header", header, "input has a header row");
  ingest->add_option("--d-target", d_target,
                     "reduce dimension to this when exceeded")
      ->check(CLI::PositiveNumber);
  ingest->add_option("--out", ingest_out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed()) {
    if (!seed_str.empty()) overrides.push_back("run.seeds=" + seed_str);
    if (!out_dir.empty()) overrides.push_back("run.out=" + out_dir);
    return cmd_run(config_path, overrides, parallelism);
  }
  if (theory->parsed()) {
    return cmd_theory(N, n, delta, trials, theory_seed, theory_out);
  }
  if (ingest->parsed()) {
    return cmd_ingest(ingest_csv, label_column, label_map, header, d_target,
                      ingest_out);
  }
  return 2;
}
