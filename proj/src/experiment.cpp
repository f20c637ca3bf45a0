#include "markovlens/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "markovlens/csv_io.hpp"
#include "markovlens/errors.hpp"
#include "markovlens/log.hpp"

namespace markovlens {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::uint64_t kPanelActionStream = 4;

MvsConfig mvs_config_of(const ExperimentConfig& config) {
  MvsConfig m;
  m.tau_max = config.pcmci.tau_max;
  m.alpha_level = config.pcmci.alpha;
  return m;
}

std::string curves_text(const std::vector<ppo::CurvePoint>& curve) {
  std::ostringstream os;
  os << "timestep,episode_return\n";
  for (const auto& p : curve) os << p.timestep << ',' << format_double(p.episode_return) << '\n';
  return os.str();
}

std::vector<ppo::CurvePoint> read_curves(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<ppo::CurvePoint> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw IoError(path.string() + ": malformed row '" + line + "'");
    out.push_back({static_cast<std::size_t>(std::stoull(f[0])), parse_double(f[1])});
  }
  return out;
}

struct Job {
  const EnvironmentConfig* env = nullptr;
  const Condition* condition = nullptr;
  std::size_t seed_index = 0;
  std::filesystem::path dir;
};

void write_failure(const Job& job, const std::string& message) {
  Json m;
  m["status"] = "failed";
  m["env"] = job.env->name;
  m["condition_id"] = job.condition->id;
  m["seed_index"] = job.seed_index;
  m["error"] = message;
  try {
    write_file_atomic(job.dir / "manifest.json", m.dump(2) + "\n");
  } catch (const std::exception& e) {
    log_warning(std::string("could not record failure: ") + e.what());
  }
}

}  // namespace

TimeSeriesPanel collect_panel(const ppo::Policy& policy, const EnvRecipe& recipe, std::size_t steps,
                              std::uint64_t seed, std::vector<std::string> names, PanelActions actions) {
  auto env = recipe.build();
  if (env->observation_dim() != policy.observation_dim()) {
    throw ContractViolation("collect_panel: policy expects " + std::to_string(policy.observation_dim()) +
                            " inputs, environment emits " + std::to_string(env->observation_dim()));
  }
  TimeSeriesPanel panel;
  panel.names = std::move(names);
  panel.data.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(env->observation_dim()));
  Rng action_rng(derive_seed(seed, kPanelActionStream));
  Observation obs = env->reset(seed);
  panel.episode_starts.push_back(0);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t j = 0; j < obs.size(); ++j) {
      panel.data(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = obs[j];
    }
    if (t + 1 == steps) break;
    StepOutcome out = env->step(actions == PanelActions::kSampled ? ppo::sample_action(policy, obs, action_rng).env_action
                                                                  : policy.act_deterministic(obs));
    if (out.terminated || out.truncated) {
      obs = env->reset();
      panel.episode_starts.push_back(t + 1);
    } else {
      obs = std::move(out.observation);
    }
  }
  return panel;
}

void summarize(ConditionRecord& record) {
  const auto n = static_cast<double>(record.runs.size());
  if (record.runs.empty()) return;
  double sum = 0.0;
  double mvs = 0.0;
  for (const RunRecord& r : record.runs) {
    sum += r.final_return;
    mvs += r.mvs.score;
  }
  record.mean_return = sum / n;
  record.mvs = mvs / n;
  double ss = 0.0;
  for (const RunRecord& r : record.runs) ss += (r.final_return - record.mean_return) * (r.final_return - record.mean_return);
  record.sd_return = record.runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

RunRecord execute_run(const ExperimentConfig& config, const EnvironmentConfig& env, const Condition& condition,
                      std::size_t seed_index, std::size_t seed_count) {
  RunRecord run;
  run.env_name = env.name;
  run.condition_id = condition.id;
  run.seed_index = seed_index;
  run.seed = seed_for(seed_index, seed_count);

  ppo::PpoConfig ppo_config = config.ppo;
  ppo_config.total_timesteps = env.time_steps;
  ppo::TrainResult trained = ppo::train(condition.recipe, ppo_config, run.seed);
  run.curve = std::move(trained.curve);
  run.final_return = ppo::final_return(run.curve);

  std::vector<PcmciResult> panels;
  for (std::size_t r = 0; r < config.pcmci.runs; ++r) {
    const TimeSeriesPanel panel = collect_panel(trained.policy, condition.recipe, config.pcmci.rollout_steps,
                                                panel_seed_for(r), condition.observation_labels, config.pcmci.actions);
    panels.push_back(run_pcmci(panel, config.pcmci.tau_max, config.pcmci.alpha));
  }
  run.links = aggregate_runs(panels).combined;
  run.mvs = compute_mvs(run.links, mvs_config_of(config));
  return run;
}

std::filesystem::path run_directory(const std::filesystem::path& out_dir, const std::string& env_name,
                                    const std::string& condition_id, std::size_t seed_index) {
  return out_dir / env_name / condition_id / std::to_string(seed_index);
}

void write_run(const RunRecord& run, const Condition& condition, const std::filesystem::path& dir) {
  write_file_atomic(dir / "curves.csv", curves_text(run.curve));
  write_links_csv(run.links, condition.observation_labels, dir / "links.csv");
  std::ostringstream mvs;
  mvs << "mvs,n_contributing_links\n" << format_double(run.mvs.score) << ',' << run.mvs.contributions.size() << '\n';
  write_file_atomic(dir / "mvs.csv", mvs.str());

  // The manifest goes last: its presence marks the run complete.
  Json m;
  m["status"] = "complete";
  m["env"] = run.env_name;
  m["condition_id"] = run.condition_id;
  m["seed_index"] = run.seed_index;
  m["seed"] = run.seed;
  m["tau_max"] = run.links.tau_max;
  m["alpha"] = run.links.alpha;
  m["episodes"] = run.curve.size();
  m["final_return"] = run.final_return;
  m["mvs"] = run.mvs.score;
  write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

std::optional<RunRecord> load_run(const Condition& condition, const std::filesystem::path& dir,
                                  const MvsConfig& mvs_config) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) return std::nullopt;
  try {
    std::ifstream in(manifest_path);
    const Json m = Json::parse(in);
    if (m.value("status", "") != "complete" || m.value("condition_id", "") != condition.id) return std::nullopt;
    RunRecord run;
    run.env_name = m.at("env").get<std::string>();
    run.condition_id = condition.id;
    run.seed_index = m.at("seed_index").get<std::size_t>();
    run.seed = m.at("seed").get<std::uint64_t>();
    const auto tau_max = m.at("tau_max").get<std::size_t>();
    const auto alpha = m.at("alpha").get<double>();
    if (tau_max != mvs_config.tau_max || alpha != mvs_config.alpha_level) return std::nullopt;
    run.curve = read_curves(dir / "curves.csv");
    run.final_return = ppo::final_return(run.curve);
    run.links = read_links_csv(dir / "links.csv", condition.observation_labels, tau_max, alpha);
    run.mvs = compute_mvs(run.links, mvs_config);
    return run;
  } catch (const std::exception& e) {
    log_warning("ignoring unreadable run in " + dir.string() + ": " + e.what());
    return std::nullopt;
  }
}

ExperimentOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  const std::size_t seed_count = options.seed_count.value_or(config.seeds);
  if (seed_count == 0) throw ConfigError("seed count must be >= 1");
  if (options.parallelism == 0) throw ConfigError("parallelism must be >= 1");

  std::vector<const EnvironmentConfig*> envs;
  for (const EnvironmentConfig& e : config.environments) {
    if (!options.env_filter || *options.env_filter == e.name) envs.push_back(&e);
  }
  if (envs.empty()) throw ConfigError("no environment matches '" + options.env_filter.value_or("") + "'");

  // Condition lists are built up front so jobs can point into them.
  std::vector<std::vector<Condition>> conditions;
  for (const EnvironmentConfig* e : envs) conditions.push_back(build_conditions(config, *e));

  const MvsConfig mvs_config = mvs_config_of(config);
  ExperimentOutcome outcome;
  std::vector<std::vector<std::vector<std::optional<RunRecord>>>> slots(envs.size());
  std::vector<Job> pending;
  for (std::size_t e = 0; e < envs.size(); ++e) {
    slots[e].resize(conditions[e].size());
    for (std::size_t c = 0; c < conditions[e].size(); ++c) {
      slots[e][c].resize(seed_count);
      for (std::size_t s = 0; s < seed_count; ++s) {
        Job job{envs[e], &conditions[e][c], s, run_directory(options.out_dir, envs[e]->name, conditions[e][c].id, s)};
        if (auto loaded = load_run(conditions[e][c], job.dir, mvs_config)) {
          slots[e][c][s] = std::move(loaded);
          ++outcome.resumed;
        } else {
          pending.push_back(std::move(job));
        }
      }
    }
  }
  if (outcome.resumed > 0) log_info("resuming: " + std::to_string(outcome.resumed) + " runs already complete");

  if (options.max_new_runs && pending.size() > *options.max_new_runs) {
    pending.resize(*options.max_new_runs);
    outcome.interrupted = true;
  }

  auto slot_of = [&](const Job& job) -> std::optional<RunRecord>& {
    const auto e = static_cast<std::size_t>(std::find(envs.begin(), envs.end(), job.env) - envs.begin());
    const auto c = static_cast<std::size_t>(job.condition - conditions[e].data());
    return slots[e][c][job.seed_index];
  };

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= pending.size()) return;
      const Job& job = pending[idx];
      try {
        log_info("run " + job.env->name + "/" + job.condition->id + "/" + std::to_string(job.seed_index));
        RunRecord run = execute_run(config, *job.env, *job.condition, job.seed_index, seed_count);
        write_run(run, *job.condition, job.dir);
        std::lock_guard lock(mu);
        slot_of(job) = std::move(run);
        ++outcome.executed;
      } catch (const std::exception& ex) {
        log_warning("run " + job.dir.string() + " failed: " + ex.what());
        write_failure(job, ex.what());
        std::lock_guard lock(mu);
        outcome.failures.push_back({job.env->name, job.condition->id, job.seed_index, ex.what()});
      }
    }
  };
  const std::size_t width = std::min(options.parallelism, std::max<std::size_t>(pending.size(), 1));
  if (width <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < width; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  std::sort(outcome.failures.begin(), outcome.failures.end(), [](const RunFailure& a, const RunFailure& b) {
    return std::tie(a.env_name, a.condition_id, a.seed_index) < std::tie(b.env_name, b.condition_id, b.seed_index);
  });

  for (std::size_t e = 0; e < envs.size(); ++e) {
    for (std::size_t c = 0; c < conditions[e].size(); ++c) {
      const auto& seeds = slots[e][c];
      if (!std::all_of(seeds.begin(), seeds.end(), [](const auto& s) { return s.has_value(); })) continue;
      ConditionRecord rec;
      rec.env_name = envs[e]->name;
      rec.condition = conditions[e][c];
      for (const auto& s : seeds) rec.runs.push_back(*s);
      summarize(rec);
      outcome.records.push_back(std::move(rec));
    }
  }
  return outcome;
}

}  // namespace markovlens
