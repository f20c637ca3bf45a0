#include "markovlens/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "markovlens/errors.hpp"

namespace markovlens::ppo {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kActionStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

nn::Vector to_vector(const Observation& obs) {
  return Eigen::Map<const nn::Vector>(obs.data(), static_cast<Eigen::Index>(obs.size()));
}

nn::Vector log_softmax(const nn::Vector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

}  // namespace

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo: gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo: gae_lambda must lie in [0, 1]");
  if (!(clip_ratio > 0.0)) throw ConfigError("ppo: clip_ratio must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("ppo: learning_rate must be > 0");
  if (rollout_length == 0) throw ConfigError("ppo: rollout_length must be > 0");
  if (minibatch_size == 0 || minibatch_size > rollout_length) {
    throw ConfigError("ppo: minibatch_size must lie in [1, rollout_length]");
  }
  if (epochs_per_update == 0) throw ConfigError("ppo: epochs_per_update must be > 0");
}

// --- Policy ----------------------------------------------------------------

Policy Policy::create(std::size_t obs_dim, const ActionSpace& space, Rng& rng) {
  Policy p;
  p.action_space = space;
  p.actor = nn::init_orthogonal(obs_dim, space.n, 0.01, rng);
  p.critic = nn::init_orthogonal(obs_dim, 1, 1.0, rng);
  if (!space.discrete()) p.log_std = nn::Vector::Zero(static_cast<Eigen::Index>(space.n));
  return p;
}

double Policy::value(const Observation& obs) const { return nn::mlp_forward(critic, to_vector(obs))(0); }

nn::Vector Policy::log_probabilities(const Observation& obs) const {
  if (!action_space.discrete()) throw ContractViolation("log_probabilities: continuous policy");
  return log_softmax(nn::mlp_forward(actor, to_vector(obs)));
}

double Policy::log_prob(const Observation& obs, const nn::Vector& action) const {
  const nn::Vector out = nn::mlp_forward(actor, to_vector(obs));
  if (action_space.discrete()) return log_softmax(out)(static_cast<Eigen::Index>(action(0)));
  const nn::Vector z = (action - out).array() / log_std.array().exp();
  return (-0.5 * z.array().square() - log_std.array() - kHalfLog2Pi).sum();
}

double Policy::entropy(const Observation& obs) const {
  if (action_space.discrete()) {
    const nn::Vector lp = log_probabilities(obs);
    return -(lp.array().exp() * lp.array()).sum();
  }
  return (log_std.array() + 0.5 + kHalfLog2Pi).sum();
}

Action Policy::act_deterministic(const Observation& obs) const {
  const nn::Vector out = nn::mlp_forward(actor, to_vector(obs));
  if (action_space.discrete()) {
    Eigen::Index best = 0;
    out.maxCoeff(&best);
    return static_cast<std::int64_t>(best);
  }
  return to_env_action(action_space, out);
}

Action to_env_action(const ActionSpace& space, const nn::Vector& action) {
  if (space.discrete()) return static_cast<std::int64_t>(action(0));
  std::vector<double> a(static_cast<std::size_t>(action.size()));
  for (Eigen::Index i = 0; i < action.size(); ++i) a[static_cast<std::size_t>(i)] = std::clamp(action(i), space.low, space.high);
  return a;
}

ActSample sample_action(const Policy& policy, const Observation& obs, Rng& rng) {
  const nn::Vector x = to_vector(obs);
  const nn::Vector out = nn::mlp_forward(policy.actor, x);
  ActSample s;
  s.value = nn::mlp_forward(policy.critic, x)(0);
  if (policy.action_space.discrete()) {
    const nn::Vector lp = log_softmax(out);
    const double u = rng.uniform(0.0, 1.0);
    Eigen::Index chosen = lp.size() - 1;
    double cumulative = 0.0;
    for (Eigen::Index k = 0; k < lp.size(); ++k) {
      cumulative += std::exp(lp(k));
      if (u < cumulative) {
        chosen = k;
        break;
      }
    }
    s.action = nn::Vector::Constant(1, static_cast<double>(chosen));
    s.log_prob = lp(chosen);
  } else {
    const nn::Vector stddev = policy.log_std.array().exp();
    s.action = out;
    for (Eigen::Index i = 0; i < out.size(); ++i) s.action(i) += stddev(i) * rng.normal();
    const nn::Vector z = (s.action - out).array() / stddev.array();
    s.log_prob = (-0.5 * z.array().square() - policy.log_std.array() - kHalfLog2Pi).sum();
  }
  s.env_action = to_env_action(policy.action_space, s.action);
  return s;
}

// --- GAE -------------------------------------------------------------------

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<bool>& dones, double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ContractViolation("compute_gae: length mismatch");
  if (!(gamma > 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractViolation("compute_gae: gamma or lambda out of range");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_advantage = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next_value = t + 1 < n ? values[t + 1] : bootstrap;
    const double not_done = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * not_done - values[t];
    next_advantage = delta + gamma * lambda * not_done * next_advantage;
    out.advantages[t] = next_advantage;
    out.returns[t] = next_advantage + values[t];
  }
  return out;
}

// --- losses and updates ----------------------------------------------------

double PolicyGradients::squared_norm() const {
  return actor.squared_norm() + critic.squared_norm() + log_std.squaredNorm();
}

PolicyGradients& PolicyGradients::operator*=(double s) {
  actor *= s;
  critic *= s;
  log_std *= s;
  return *this;
}

OptimizerState OptimizerState::for_policy(const Policy& policy) {
  OptimizerState o;
  o.actor = nn::AdamState::for_params(policy.actor);
  o.critic = nn::AdamState::for_params(policy.critic);
  o.log_std_m = nn::Vector::Zero(policy.log_std.size());
  o.log_std_v = nn::Vector::Zero(policy.log_std.size());
  return o;
}

MinibatchLoss minibatch_loss(const Policy& policy, const nn::Matrix& observations, const nn::Matrix& actions,
                             const std::vector<double>& old_log_probs, const std::vector<double>& advantages,
                             const std::vector<double>& returns, const PpoConfig& config) {
  const Eigen::Index batch = observations.cols();
  if (batch == 0 || actions.cols() != batch || static_cast<Eigen::Index>(old_log_probs.size()) != batch ||
      static_cast<Eigen::Index>(advantages.size()) != batch || static_cast<Eigen::Index>(returns.size()) != batch) {
    throw ContractViolation("minibatch_loss: batch size mismatch");
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  const bool discrete = policy.action_space.discrete();

  const nn::ForwardCache actor_cache = nn::mlp_forward_batch(policy.actor, observations);
  const nn::ForwardCache critic_cache = nn::mlp_forward_batch(policy.critic, observations);
  const nn::Matrix& out = actor_cache.output;

  MinibatchLoss loss;
  nn::Matrix d_out = nn::Matrix::Zero(out.rows(), batch);
  nn::Matrix d_value = nn::Matrix::Zero(1, batch);
  nn::Vector d_log_std = nn::Vector::Zero(policy.log_std.size());
  nn::Vector inv_var;
  if (!discrete) inv_var = (-2.0 * policy.log_std.array()).exp();

  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    double new_log_prob = 0.0;
    double entropy = 0.0;
    nn::Vector probs;
    nn::Vector log_probs;
    nn::Vector diff;
    if (discrete) {
      log_probs = log_softmax(out.col(i));
      probs = log_probs.array().exp();
      new_log_prob = log_probs(static_cast<Eigen::Index>(actions(0, i)));
      entropy = -(probs.array() * log_probs.array()).sum();
    } else {
      diff = actions.col(i) - out.col(i);
      new_log_prob = (-0.5 * diff.array().square() * inv_var.array() - policy.log_std.array() - kHalfLog2Pi).sum();
      entropy = (policy.log_std.array() + 0.5 + kHalfLog2Pi).sum();
    }

    const double log_ratio = new_log_prob - old_log_probs[ui];
    const double ratio = std::exp(log_ratio);
    const double adv = advantages[ui];
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio) * adv;
    loss.policy_loss -= std::min(unclipped, clipped) * inv_b;
    loss.entropy += entropy * inv_b;
    if (std::abs(ratio - 1.0) > config.clip_ratio) loss.clip_fraction += inv_b;
    loss.approx_kl += (ratio - 1.0 - log_ratio) * inv_b;

    // Only the unclipped branch carries gradient.
    const double d_log_prob = unclipped <= clipped ? -adv * ratio * inv_b : 0.0;

    if (discrete) {
      const auto a = static_cast<Eigen::Index>(actions(0, i));
      nn::Vector g = -d_log_prob * probs;
      g(a) += d_log_prob;
      // d(-H)/dlogits = p * (log p + H)
      g += config.entropy_coef * inv_b * (probs.array() * (log_probs.array() + entropy)).matrix();
      d_out.col(i) = g;
    } else {
      d_out.col(i) = d_log_prob * (diff.array() * inv_var.array()).matrix();
      d_log_std += d_log_prob * (diff.array().square() * inv_var.array() - 1.0).matrix();
      d_log_std.array() -= config.entropy_coef * inv_b;
    }

    const double v = critic_cache.output(0, i);
    const double err = v - returns[ui];
    loss.value_loss += err * err * inv_b;
    d_value(0, i) = config.value_coef * 2.0 * err * inv_b;
  }

  loss.total = loss.policy_loss - config.entropy_coef * loss.entropy + config.value_coef * loss.value_loss;
  loss.grads.actor = nn::mlp_backward(policy.actor, actor_cache, d_out);
  loss.grads.critic = nn::mlp_backward(policy.critic, critic_cache, d_value);
  loss.grads.log_std = d_log_std;
  return loss;
}

UpdateResult ppo_update(Policy policy, OptimizerState optimizer, const RolloutBuffer& buffer,
                        const PpoConfig& config, Rng& rng) {
  const std::size_t n = buffer.size();
  if (n == 0 || buffer.advantages.size() != n || buffer.returns.size() != n ||
      static_cast<std::size_t>(buffer.observations.cols()) != n) {
    throw ContractViolation("ppo_update: buffer is not filled");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  UpdateStats stats;
  const std::size_t mb = std::min(config.minibatch_size, n);
  for (std::size_t epoch = 0; epoch < config.epochs_per_update; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t count = std::min(mb, n - start);
      nn::Matrix obs(buffer.observations.rows(), static_cast<Eigen::Index>(count));
      nn::Matrix act(buffer.actions.rows(), static_cast<Eigen::Index>(count));
      std::vector<double> old_lp(count), adv(count), ret(count);
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = order[start + k];
        obs.col(static_cast<Eigen::Index>(k)) = buffer.observations.col(static_cast<Eigen::Index>(idx));
        act.col(static_cast<Eigen::Index>(k)) = buffer.actions.col(static_cast<Eigen::Index>(idx));
        old_lp[k] = buffer.log_probs[idx];
        adv[k] = buffer.advantages[idx];
        ret[k] = buffer.returns[idx];
      }
      if (config.normalize_advantage && count > 1) {
        const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(count);
        double ss = 0.0;
        for (double a : adv) ss += (a - mean) * (a - mean);
        const double sd = std::sqrt(ss / static_cast<double>(count - 1));
        for (double& a : adv) a = (a - mean) / (sd + 1e-8);
      }

      MinibatchLoss loss = minibatch_loss(policy, obs, act, old_lp, adv, ret, config);
      if (!std::isfinite(loss.total)) {
        throw TrainingError("ppo_update: non-finite loss (policy " + std::to_string(loss.policy_loss) +
                            ", value " + std::to_string(loss.value_loss) + ")");
      }
      const double norm = std::sqrt(loss.grads.squared_norm());
      if (!std::isfinite(norm)) throw TrainingError("ppo_update: non-finite gradient norm");
      if (config.max_grad_norm > 0.0) {
        const double coef = config.max_grad_norm / (norm + 1e-6);
        if (coef < 1.0) loss.grads *= coef;
      }

      ++optimizer.step;
      std::tie(policy.actor, optimizer.actor) =
          nn::adam_step(std::move(policy.actor), loss.grads.actor, std::move(optimizer.actor),
                        config.learning_rate, config.adam);
      std::tie(policy.critic, optimizer.critic) =
          nn::adam_step(std::move(policy.critic), loss.grads.critic, std::move(optimizer.critic),
                        config.learning_rate, config.adam);
      if (policy.log_std.size() > 0) {
        nn::adam_update_tensor(policy.log_std, loss.grads.log_std, optimizer.log_std_m, optimizer.log_std_v,
                               optimizer.step, config.learning_rate, config.adam);
      }

      stats.policy_loss += loss.policy_loss;
      stats.value_loss += loss.value_loss;
      stats.entropy += loss.entropy;
      stats.clip_fraction += loss.clip_fraction;
      stats.approx_kl += loss.approx_kl;
      stats.grad_norm += norm;
      ++stats.minibatches;
    }
  }
  if (stats.minibatches > 0) {
    const double k = static_cast<double>(stats.minibatches);
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    stats.approx_kl /= k;
    stats.grad_norm /= k;
  }
  return {std::move(policy), std::move(optimizer), stats};
}

// --- training loop ---------------------------------------------------------

TrainResult train(const EnvRecipe& recipe, const PpoConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.total_timesteps < config.rollout_length) {
    throw ConfigError("ppo: total_timesteps must be >= rollout_length");
  }
  auto env = recipe.build();
  const std::size_t obs_dim = env->observation_dim();
  const ActionSpace space = env->action_space();

  Rng init_rng(derive_seed(seed, kInitStream));
  Rng action_rng(derive_seed(seed, kActionStream));
  Rng shuffle_rng(derive_seed(seed, kShuffleStream));

  TrainResult result;
  result.policy = Policy::create(obs_dim, space, init_rng);
  OptimizerState optimizer = OptimizerState::for_policy(result.policy);

  const std::size_t n = config.rollout_length;
  const auto width = static_cast<Eigen::Index>(result.policy.action_width());
  RolloutBuffer buffer;

  Observation obs = env->reset(seed);
  double episode_return = 0.0;
  while (result.timesteps < config.total_timesteps) {
    buffer.observations.resize(static_cast<Eigen::Index>(obs_dim), static_cast<Eigen::Index>(n));
    buffer.actions.resize(width, static_cast<Eigen::Index>(n));
    buffer.log_probs.assign(n, 0.0);
    buffer.values.assign(n, 0.0);
    buffer.rewards.assign(n, 0.0);
    buffer.dones.assign(n, false);

    for (std::size_t t = 0; t < n; ++t) {
      const ActSample sample = sample_action(result.policy, obs, action_rng);
      StepOutcome outcome = env->step(sample.env_action);
      ++result.timesteps;
      episode_return += outcome.reward;

      double reward = outcome.reward;
      const bool done = outcome.terminated || outcome.truncated;
      // Time-limit truncation is not a true terminal: fold the bootstrap into the reward.
      if (outcome.truncated && !outcome.terminated) {
        reward += config.gamma * result.policy.value(outcome.observation);
      }

      const auto col = static_cast<Eigen::Index>(t);
      buffer.observations.col(col) = to_vector(obs);
      buffer.actions.col(col) = sample.action;
      buffer.log_probs[t] = sample.log_prob;
      buffer.values[t] = sample.value;
      buffer.rewards[t] = reward;
      buffer.dones[t] = done;

      if (done) {
        result.curve.push_back({result.timesteps, episode_return});
        episode_return = 0.0;
        obs = env->reset();
      } else {
        obs = std::move(outcome.observation);
      }
    }
    buffer.bootstrap_value = result.policy.value(obs);
    GaeResult gae = compute_gae(buffer.rewards, buffer.values, buffer.dones, buffer.bootstrap_value,
                                config.gamma, config.gae_lambda);
    buffer.advantages = std::move(gae.advantages);
    buffer.returns = std::move(gae.returns);

    UpdateResult update = ppo_update(std::move(result.policy), std::move(optimizer), buffer, config, shuffle_rng);
    result.policy = std::move(update.policy);
    optimizer = std::move(update.optimizer);
    result.last_stats = update.stats;
    ++result.updates;
  }
  return result;
}

double final_return(const std::vector<CurvePoint>& curve, std::size_t window) {
  if (curve.empty()) return 0.0;
  const std::size_t k = std::min(window, curve.size());
  double sum = 0.0;
  for (std::size_t i = curve.size() - k; i < curve.size(); ++i) sum += curve[i].episode_return;
  return sum / static_cast<double>(k);
}

}  // namespace markovlens::ppo
