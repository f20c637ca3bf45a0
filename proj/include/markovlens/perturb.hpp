#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "markovlens/env.hpp"
#include "markovlens/rng.hpp"

namespace markovlens {

// i.i.d. additive N(mean, variance) noise on the target dimensions.
struct GaussianNoiseSpec {
  double mean = 0.0;
  double variance = 0.0;
  std::vector<std::size_t> target_dims;
};

// One scalar AR(p) process z, added to every target dimension:
//   z_{t+1} = sum_l alphas[l] * z_{t-l} + eps,  eps ~ N(0, sigma^2).
struct ArNoiseSpec {
  std::vector<double> alphas;
  double sigma = 0.0;
  std::vector<std::size_t> target_dims;

  std::size_t order() const { return alphas.size(); }
};

using NoiseSpec = std::variant<GaussianNoiseSpec, ArNoiseSpec>;

struct DropSpec {
  std::vector<std::size_t> dropped_dims;
};

// Fixed-capacity history of the last p values of z, most recent first.
class ArState {
 public:
  ArState() = default;
  explicit ArState(std::size_t order) : values_(order, 0.0) {}

  std::size_t order() const { return values_.size(); }
  // lag(0) = z_t, lag(1) = z_{t-1}, ...
  double lag(std::size_t l) const { return values_[(head_ + l) % values_.size()]; }
  void push(double z);
  void clear();

 private:
  std::vector<double> values_;
  std::size_t head_ = 0;
};

// Validation against an observation dimension; throw ConfigError.
void validate(const GaussianNoiseSpec& spec, std::size_t obs_dim);
void validate(const ArNoiseSpec& spec, std::size_t obs_dim);
void validate(const DropSpec& spec, std::size_t obs_dim);

Observation gaussian_perturb(const Observation& obs, const GaussianNoiseSpec& spec, Rng& rng);

// Returns the advanced state together with the new value z_{t+1}.
std::pair<ArState, double> ar_advance(ArState state, const ArNoiseSpec& spec, Rng& rng);

Observation ar_perturb(const Observation& obs, double z, const ArNoiseSpec& spec);

Observation drop_dims(const Observation& obs, const DropSpec& spec);

// Environment whose emitted observations are noised and then reduced.
// Dynamics, rewards and termination come from the wrapped environment.
class PerturbedEnv final : public Env {
 public:
  PerturbedEnv(std::unique_ptr<Env> inner, std::optional<NoiseSpec> noise, DropSpec drop);

  std::string_view name() const override { return inner_->name(); }
  std::size_t observation_dim() const override;
  ActionSpace action_space() const override { return inner_->action_space(); }
  std::size_t max_episode_steps() const override { return inner_->max_episode_steps(); }

  Observation reset(std::optional<std::uint64_t> seed = std::nullopt) override;
  StepOutcome step(const Action& action) override;

  const Env& inner() const { return *inner_; }

 private:
  Observation emit(const Observation& raw);

  std::unique_ptr<Env> inner_;
  std::optional<NoiseSpec> noise_;
  DropSpec drop_;
  Rng noise_rng_;
  ArState ar_state_;
};

// Everything needed to build a fresh (possibly perturbed) environment.
struct EnvRecipe {
  std::string env_name;
  std::optional<NoiseSpec> noise;
  DropSpec drop;

  std::unique_ptr<Env> build() const;
  std::size_t observation_dim() const;
};

}  // namespace markovlens
