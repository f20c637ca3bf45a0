#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "markovlens/env.hpp"
#include "markovlens/nn.hpp"
#include "markovlens/perturb.hpp"
#include "markovlens/rng.hpp"

namespace markovlens::ppo {

struct PpoConfig {
  double learning_rate = 3e-4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  std::size_t minibatch_size = 64;
  std::size_t epochs_per_update = 4;
  std::size_t rollout_length = 2048;
  std::size_t total_timesteps = 50000;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  bool normalize_advantage = true;
  nn::AdamConfig adam{};

  // Throws ConfigError.
  void validate() const;
};

// Actor and critic are separate 64-64 tanh MLPs. Continuous policies are
// diagonal Gaussians with a state-independent log-std.
struct Policy {
  nn::MlpParams actor;
  nn::MlpParams critic;
  nn::Vector log_std;  // empty for discrete action spaces
  ActionSpace action_space;

  static Policy create(std::size_t obs_dim, const ActionSpace& space, Rng& rng);

  std::size_t observation_dim() const { return actor.input_dim(); }
  // Width of the stored action vector: 1 for discrete, action dimension otherwise.
  std::size_t action_width() const { return action_space.discrete() ? 1 : action_space.n; }

  double value(const Observation& obs) const;
  // Discrete: log-softmax over actions. Continuous: not defined.
  nn::Vector log_probabilities(const Observation& obs) const;
  double log_prob(const Observation& obs, const nn::Vector& action) const;
  double entropy(const Observation& obs) const;

  // Argmax action, or the Gaussian mean clipped to the action bounds.
  Action act_deterministic(const Observation& obs) const;
};

struct ActSample {
  nn::Vector action;  // raw sample as stored in the buffer
  Action env_action;  // what is sent to the environment (clipped for boxes)
  double log_prob = 0.0;
  double value = 0.0;
};

ActSample sample_action(const Policy& policy, const Observation& obs, Rng& rng);

// Converts a stored action vector into an environment action.
Action to_env_action(const ActionSpace& space, const nn::Vector& action);

struct RolloutBuffer {
  nn::Matrix observations;  // obs_dim x n
  nn::Matrix actions;       // action_width x n
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<bool> dones;  // transition t ended its episode
  double bootstrap_value = 0.0;

  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return rewards.size(); }
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t,  A_t = delta_t + gamma lambda (1 - done_t) A_{t+1},
// with V_n = bootstrap. returns = advantages + values.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<bool>& dones, double bootstrap, double gamma, double lambda);

// Adam moments for every trainable tensor of a Policy.
struct OptimizerState {
  nn::AdamState actor;
  nn::AdamState critic;
  nn::Vector log_std_m;
  nn::Vector log_std_v;
  std::int64_t step = 0;

  static OptimizerState for_policy(const Policy& policy);
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  std::size_t minibatches = 0;
};

struct PolicyGradients {
  nn::MlpParams actor;
  nn::MlpParams critic;
  nn::Vector log_std;
  double squared_norm() const;
  PolicyGradients& operator*=(double s);
};

// Clipped-surrogate loss of one minibatch and its gradient. `advantages` are
// used as given (normalize beforehand if desired).
struct MinibatchLoss {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  PolicyGradients grads;
};

MinibatchLoss minibatch_loss(const Policy& policy, const nn::Matrix& observations, const nn::Matrix& actions,
                             const std::vector<double>& old_log_probs, const std::vector<double>& advantages,
                             const std::vector<double>& returns, const PpoConfig& config);

struct UpdateResult {
  Policy policy;
  OptimizerState optimizer;
  UpdateStats stats;
};

// Epochs of shuffled minibatch updates over a filled buffer (advantages and
// returns already computed). Throws TrainingError on a non-finite loss.
UpdateResult ppo_update(Policy policy, OptimizerState optimizer, const RolloutBuffer& buffer,
                        const PpoConfig& config, Rng& rng);

struct CurvePoint {
  std::size_t timestep = 0;
  double episode_return = 0.0;
};

struct TrainResult {
  Policy policy;
  std::vector<CurvePoint> curve;
  std::size_t updates = 0;
  std::size_t timesteps = 0;
  UpdateStats last_stats;
};

// Alternates rollout collection and updates until total_timesteps is consumed
// (rounded up to whole rollouts). Deterministic given the seed.
TrainResult train(const EnvRecipe& recipe, const PpoConfig& config, std::uint64_t seed);

// Mean of the last `window` completed-episode returns (all of them if fewer).
double final_return(const std::vector<CurvePoint>& curve, std::size_t window = 10);

}  // namespace markovlens::ppo
