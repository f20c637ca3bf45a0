#include "markovlens/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

#include "markovlens/errors.hpp"
#include "markovlens/log.hpp"

namespace markovlens {

namespace {

// Every environment build re-validates its recipe; say it once per process.
void warn_once(const std::string& message) {
  static std::mutex mutex;
  static std::set<std::string> seen;
  std::lock_guard lock(mutex);
  if (seen.insert(message).second) log_warning(message);
}

constexpr std::uint64_t kNoiseStream = 0x6e6f697365;  // "noise"

void validate_dims(const std::vector<std::size_t>& dims, std::size_t obs_dim, const char* what) {
  std::set<std::size_t> seen;
  for (std::size_t d : dims) {
    if (d >= obs_dim) {
      throw ConfigError(std::string(what) + ": dimension index " + std::to_string(d) +
                        " out of range for observation dimension " + std::to_string(obs_dim));
    }
    if (!seen.insert(d).second) {
      throw ConfigError(std::string(what) + ": duplicate dimension index " + std::to_string(d));
    }
  }
}

}  // namespace

void ArState::push(double z) {
  if (values_.empty()) return;
  head_ = (head_ + values_.size() - 1) % values_.size();
  values_[head_] = z;
}

void ArState::clear() {
  std::fill(values_.begin(), values_.end(), 0.0);
  head_ = 0;
}

void validate(const GaussianNoiseSpec& spec, std::size_t obs_dim) {
  if (!(spec.variance >= 0.0) || !std::isfinite(spec.variance) || !std::isfinite(spec.mean)) {
    throw ConfigError("gaussian noise: variance must be finite and >= 0");
  }
  validate_dims(spec.target_dims, obs_dim, "gaussian noise");
}

void validate(const ArNoiseSpec& spec, std::size_t obs_dim) {
  if (spec.alphas.empty()) throw ConfigError("auto-regressive noise: alphas must be non-empty");
  if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma)) {
    throw ConfigError("auto-regressive noise: sigma must be finite and >= 0");
  }
  validate_dims(spec.target_dims, obs_dim, "auto-regressive noise");
}

void validate(const DropSpec& spec, std::size_t obs_dim) {
  validate_dims(spec.dropped_dims, obs_dim, "drop");
  if (spec.dropped_dims.size() >= obs_dim) {
    throw ConfigError("drop: cannot drop every observation dimension");
  }
}

Observation gaussian_perturb(const Observation& obs, const GaussianNoiseSpec& spec, Rng& rng) {
  Observation out = obs;
  const double stddev = std::sqrt(spec.variance);
  for (std::size_t d : spec.target_dims) {
    if (d >= out.size()) throw ConfigError("gaussian noise: dimension index out of range");
    out[d] += stddev > 0.0 ? rng.normal(spec.mean, stddev) : spec.mean;
  }
  return out;
}

std::pair<ArState, double> ar_advance(ArState state, const ArNoiseSpec& spec, Rng& rng) {
  if (state.order() != spec.order()) throw ContractViolation("ar_advance: history length != AR order");
  double z = 0.0;
  for (std::size_t l = 0; l < spec.order(); ++l) z += spec.alphas[l] * state.lag(l);
  if (spec.sigma > 0.0) z += rng.normal(0.0, spec.sigma);
  state.push(z);
  return {std::move(state), z};
}

Observation ar_perturb(const Observation& obs, double z, const ArNoiseSpec& spec) {
  Observation out = obs;
  for (std::size_t d : spec.target_dims) {
    if (d >= out.size()) throw ConfigError("auto-regressive noise: dimension index out of range");
    out[d] += z;
  }
  return out;
}

Observation drop_dims(const Observation& obs, const DropSpec& spec) {
  validate(spec, obs.size());
  if (spec.dropped_dims.empty()) return obs;
  Observation out;
  out.reserve(obs.size() - spec.dropped_dims.size());
  for (std::size_t d = 0; d < obs.size(); ++d) {
    if (std::find(spec.dropped_dims.begin(), spec.dropped_dims.end(), d) == spec.dropped_dims.end()) {
      out.push_back(obs[d]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

PerturbedEnv::PerturbedEnv(std::unique_ptr<Env> inner, std::optional<NoiseSpec> noise, DropSpec drop)
    : inner_(std::move(inner)), noise_(std::move(noise)), drop_(std::move(drop)) {
  const std::size_t dim = inner_->observation_dim();
  validate(drop_, dim);
  if (noise_) {
    std::visit([dim](const auto& spec) { validate(spec, dim); }, *noise_);
    if (const auto* ar = std::get_if<ArNoiseSpec>(&*noise_)) {
      double l1 = 0.0;
      for (double a : ar->alphas) l1 += std::abs(a);
      if (l1 >= 1.0) warn_once("auto-regressive noise with sum |alpha| = " + std::to_string(l1) +
                               " >= 1 is not guaranteed to be stationary");
      ar_state_ = ArState(ar->order());
    }
  }
}

std::size_t PerturbedEnv::observation_dim() const {
  return inner_->observation_dim() - drop_.dropped_dims.size();
}

Observation PerturbedEnv::reset(std::optional<std::uint64_t> seed) {
  if (seed) noise_rng_.reseed(derive_seed(*seed, kNoiseStream));
  ar_state_.clear();
  return emit(inner_->reset(seed));
}

StepOutcome PerturbedEnv::step(const Action& action) {
  StepOutcome outcome = inner_->step(action);
  outcome.observation = emit(outcome.observation);
  return outcome;
}

Observation PerturbedEnv::emit(const Observation& raw) {
  Observation obs = raw;
  if (noise_) {
    if (const auto* g = std::get_if<GaussianNoiseSpec>(&*noise_)) {
      obs = gaussian_perturb(obs, *g, noise_rng_);
    } else {
      const auto& ar = std::get<ArNoiseSpec>(*noise_);
      double z = 0.0;
      std::tie(ar_state_, z) = ar_advance(std::move(ar_state_), ar, noise_rng_);
      obs = ar_perturb(obs, z, ar);
    }
  }
  return drop_dims(obs, drop_);
}

std::unique_ptr<Env> EnvRecipe::build() const {
  return std::make_unique<PerturbedEnv>(make_env(env_name), noise, drop);
}

std::size_t EnvRecipe::observation_dim() const {
  return make_env(env_name)->observation_dim() - drop.dropped_dims.size();
}

}  // namespace markovlens
