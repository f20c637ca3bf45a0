#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "markovlens/config.hpp"
#include "markovlens/mvs.hpp"
#include "markovlens/pcmci.hpp"
#include "markovlens/ppo.hpp"

namespace markovlens {

// Runs the policy for `steps` environment steps, resetting on episode end,
// and records every emitted observation. The first reset uses `seed`; later
// resets continue the environment's stream. Sampled actions draw from a
// stream derived from `seed`.
TimeSeriesPanel collect_panel(const ppo::Policy& policy, const EnvRecipe& recipe, std::size_t steps,
                              std::uint64_t seed, std::vector<std::string> names = {},
                              PanelActions actions = PanelActions::kSampled);

// One trained seed of one condition.
struct RunRecord {
  std::string env_name;
  std::string condition_id;
  std::size_t seed_index = 0;
  std::uint64_t seed = 0;
  std::vector<ppo::CurvePoint> curve;
  double final_return = 0.0;
  PcmciResult links;  // aggregated over the PCMCI panels
  MvsReport mvs;
};

struct ConditionRecord {
  std::string env_name;
  Condition condition;
  std::vector<RunRecord> runs;  // ordered by seed index
  double mean_return = 0.0;
  double sd_return = 0.0;  // sample standard deviation across seeds
  double mvs = 0.0;        // mean of the per-seed aggregated scores

  std::size_t seed_count() const { return runs.size(); }
};

// Fills mean_return, sd_return and mvs from `runs`.
void summarize(ConditionRecord& record);

struct RunFailure {
  std::string env_name;
  std::string condition_id;
  std::size_t seed_index = 0;
  std::string message;
};

struct RunOptions {
  std::filesystem::path out_dir = "results";
  std::size_t parallelism = 10;
  std::optional<std::string> env_filter;
  std::optional<std::size_t> seed_count;  // overrides config.seeds
  // Stop after this many newly executed runs (simulates an interrupted sweep).
  std::optional<std::size_t> max_new_runs;
};

struct ExperimentOutcome {
  std::vector<ConditionRecord> records;  // conditions whose seeds all completed
  std::vector<RunFailure> failures;
  std::size_t executed = 0;
  std::size_t resumed = 0;
  bool interrupted = false;

  bool ok() const { return failures.empty() && !interrupted; }
};

// Trains, collects PCMCI panels and scores every environment x condition x
// seed. Each finished run is written to out_dir/<env>/<condition>/<seed>/ and
// runs already marked complete there are loaded instead of recomputed.
ExperimentOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options);

// Trains and scores one run without touching the filesystem.
RunRecord execute_run(const ExperimentConfig& config, const EnvironmentConfig& env, const Condition& condition,
                      std::size_t seed_index, std::size_t seed_count);

std::filesystem::path run_directory(const std::filesystem::path& out_dir, const std::string& env_name,
                                    const std::string& condition_id, std::size_t seed_index);

void write_run(const RunRecord& run, const Condition& condition, const std::filesystem::path& dir);
// Returns nothing unless the directory holds a complete run. The MVS report is
// recomputed from the stored link table.
std::optional<RunRecord> load_run(const Condition& condition, const std::filesystem::path& dir,
                                  const MvsConfig& mvs_config);

}  // namespace markovlens
