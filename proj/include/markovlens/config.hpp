#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "markovlens/perturb.hpp"
#include "markovlens/ppo.hpp"

namespace markovlens {

// A dimension given either by index or by observation label.
using DimRef = std::variant<std::size_t, std::string>;

struct GaussianSetting {
  double mean = 0.0;
  double variance = 0.0;
  std::optional<std::vector<DimRef>> target_dims;  // empty optional = all dimensions
};

struct ArSetting {
  std::string order_label;  // e.g. "AR(2)"
  std::vector<double> alphas;
  double sigma = 0.0;
  std::optional<std::vector<DimRef>> target_dims;
};

struct EnvironmentConfig {
  std::string name;
  std::size_t time_steps = 0;
  std::vector<std::string> observations;  // labels, one per observation dimension
  std::size_t n_envs = 1;
  std::vector<std::vector<DimRef>> drop_dimensions;  // environment-specific drop sets
};

// How the trained policy acts while PCMCI panels are collected.
enum class PanelActions { kSampled, kDeterministic };

struct PcmciSettings {
  std::size_t tau_max = 5;
  double alpha = 0.05;
  std::size_t rollout_steps = 2000;
  std::size_t runs = 5;
  PanelActions actions = PanelActions::kSampled;  // "action_mode": "sampled" | "deterministic"
};

struct ExperimentConfig {
  std::vector<EnvironmentConfig> environments;
  std::vector<GaussianSetting> gaussian;
  std::vector<ArSetting> auto_regressive;
  std::vector<std::vector<DimRef>> drop_dimensions;  // applied to every environment
  std::size_t seeds = 5;
  PcmciSettings pcmci;
  ppo::PpoConfig ppo;  // total_timesteps is taken per environment
};

// Parses a JSON config document. Omitted blocks get defaults; unknown keys,
// malformed values and unresolvable dimension labels throw ConfigError with
// the offending path.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Index of `ref` within the environment's observation labels.
std::size_t resolve_dim(const DimRef& ref, const EnvironmentConfig& env);
std::vector<std::size_t> resolve_dims(const std::vector<DimRef>& refs, const EnvironmentConfig& env);

// Training seed of run i: 10000 + i. Throws ContractViolation unless i < seed_count.
std::uint64_t seed_for(std::size_t run_index, std::size_t seed_count = 5);

// Seed of the r-th PCMCI rollout panel: 20000 + r.
std::uint64_t panel_seed_for(std::size_t panel_index);

// One experimental cell for one environment.
struct Condition {
  enum class Kind { kBaseline, kGaussian, kAutoRegressive, kDrop };
  Kind kind = Kind::kBaseline;
  std::string id;  // filesystem-safe, unique per environment
  EnvRecipe recipe;
  std::vector<std::string> observation_labels;  // labels of the emitted (post-drop) observation
};

// Baseline first, then Gaussian, AR and drop conditions in config order.
std::vector<Condition> build_conditions(const ExperimentConfig& config, const EnvironmentConfig& env);

}  // namespace markovlens
