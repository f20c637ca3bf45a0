#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "markovlens/config.hpp"
#include "markovlens/csv_io.hpp"
#include "markovlens/errors.hpp"
#include "markovlens/experiment.hpp"
#include "markovlens/log.hpp"
#include "markovlens/mvs.hpp"
#include "markovlens/pcmci.hpp"
#include "markovlens/report.hpp"

using namespace markovlens;

namespace {

int run_command(const std::filesystem::path& config_path, const RunOptions& options, const ReportOptions& report) {
  const ExperimentConfig config = load_config(config_path);
  const ExperimentOutcome outcome = run_experiment(config, options);
  std::cerr << "runs executed: " << outcome.executed << ", resumed: " << outcome.resumed
            << ", failed: " << outcome.failures.size() << "\n";
  for (const RunFailure& f : outcome.failures) {
    std::cerr << "  failed " << f.env_name << "/" << f.condition_id << "/" << f.seed_index << ": " << f.message
              << "\n";
  }
  if (!outcome.records.empty()) {
    emit_report(outcome.records, options.out_dir, report);
    for (const ConditionRecord& r : outcome.records) {
      std::printf("%-14s %-44s return %8.2f +- %7.2f  mvs %.6f\n", r.env_name.c_str(), r.condition.id.c_str(),
                  r.mean_return, ci95_half_width(r.sd_return, r.seed_count(), report.t_interval), r.mvs);
    }
  }
  if (outcome.interrupted) {
    std::cerr << "sweep stopped early; rerun to resume\n";
    return 3;
  }
  return outcome.failures.empty() ? 0 : 1;
}

int analyze_command(const std::filesystem::path& panel_path, std::size_t tau_max, double alpha,
                    const std::optional<std::filesystem::path>& links_out) {
  const TimeSeriesPanel panel = read_panel_csv(panel_path);
  const PcmciResult result = run_pcmci(panel, tau_max, alpha);
  MvsConfig mvs_config;
  mvs_config.tau_max = tau_max;
  mvs_config.alpha_level = alpha;
  const MvsReport mvs = compute_mvs(result, mvs_config);
  if (links_out) write_links_csv(result, panel.names, *links_out);
  std::printf("child,parent,lag,p_value,partial_corr\n");
  for (const LinkRow& row : link_table(result, true)) {
    std::printf("%s,%s,%d,%s,%s\n", panel.names[row.child].c_str(), panel.names[row.parent].c_str(), row.lag,
                format_double(row.p_value).c_str(), format_double(row.partial_corr).c_str());
  }
  std::printf("mvs,%s\n", format_double(mvs.score).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Observation perturbation sweeps with PPO, PCMCI and the Markov Violation Score"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  auto* run = app.add_subcommand("run", "Train, collect panels and score every configured condition");
  std::filesystem::path config_path;
  RunOptions options;
  std::string env_filter;
  std::size_t seed_count = 0;
  std::size_t max_runs = 0;
  ReportOptions report;
  run->add_option("--config-path", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--env", env_filter, "Only run this environment");
  run->add_option("--out", options.out_dir, "Results directory")->capture_default_str();
  run->add_option("--parallelism", options.parallelism, "Worker threads")->capture_default_str()->check(
      CLI::PositiveNumber);
  run->add_option("--seed-count", seed_count, "Override the configured seed count")->check(CLI::PositiveNumber);
  run->add_flag("--t-ci", report.t_interval, "Use Student-t instead of 1.96 for CI95 half-widths");
  run->add_option("--max-runs", max_runs, "Stop after this many new runs")->group("");

  auto* analyze = app.add_subcommand("analyze", "PCMCI and MVS on a CSV panel");
  std::filesystem::path panel_path;
  std::size_t tau_max = 5;
  double alpha = 0.05;
  std::optional<std::filesystem::path> links_out;
  analyze->add_option("--panel", panel_path, "Panel CSV: header of names, one row per step")
      ->required()
      ->check(CLI::ExistingFile);
  analyze->add_option("--tau-max", tau_max, "Maximum lag")->capture_default_str();
  analyze->add_option("--alpha", alpha, "Significance level")->capture_default_str();
  analyze->add_option("--out", links_out, "Write the full link table here");

  CLI11_PARSE(app, argc, argv);
  set_log_level(verbose ? LogLevel::kInfo : LogLevel::kWarning);

  try {
    if (run->parsed()) {
      if (!env_filter.empty()) options.env_filter = env_filter;
      if (seed_count > 0) options.seed_count = seed_count;
      if (max_runs > 0) options.max_new_runs = max_runs;
      return run_command(config_path, options, report);
    }
    return analyze_command(panel_path, tau_max, alpha, links_out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
