#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "markovlens/rng.hpp"

namespace markovlens {

using Observation = std::vector<double>;

// Discrete environments take an action index, continuous ones a torque vector.
using Action = std::variant<std::int64_t, std::vector<double>>;

struct ActionSpace {
  enum class Kind { kDiscrete, kBox };
  Kind kind = Kind::kDiscrete;
  std::size_t n = 0;  // action count (discrete) or action dimension (box)
  double low = 0.0;
  double high = 0.0;

  bool discrete() const { return kind == Kind::kDiscrete; }
  bool contains(const Action& action) const;
};

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

// Common interface for the classic-control tasks and the observation wrappers
// stacked on top of them. Handles are single-owner.
class Env {
 public:
  virtual ~Env() = default;

  virtual std::string_view name() const = 0;
  virtual std::size_t observation_dim() const = 0;
  virtual ActionSpace action_space() const = 0;
  virtual std::size_t max_episode_steps() const = 0;

  // Seeding re-initializes the environment's RNG; an empty seed continues the
  // existing stream.
  virtual Observation reset(std::optional<std::uint64_t> seed = std::nullopt) = 0;
  virtual StepOutcome step(const Action& action) = 0;
};

// Plain dynamics shared by the three tasks: owns the internal state vector,
// the step counter and the done bookkeeping.
class ClassicControlEnv : public Env {
 public:
  std::size_t max_episode_steps() const override { return max_steps_; }

  Observation reset(std::optional<std::uint64_t> seed = std::nullopt) override;
  StepOutcome step(const Action& action) override;

  std::span<const double> state() const { return state_; }
  // Overwrites the internal state, e.g. to replay a recorded trace.
  void set_state(std::span<const double> state);
  std::size_t elapsed_steps() const { return elapsed_; }

 protected:
  ClassicControlEnv(std::size_t state_dim, std::size_t max_steps)
      : state_(state_dim, 0.0), max_steps_(max_steps) {}

  virtual void sample_initial_state(Rng& rng) = 0;
  // Advances state_ in place; returns (reward, terminated).
  virtual std::pair<double, bool> advance(const Action& action) = 0;
  virtual Observation observe() const = 0;

  std::vector<double> state_;

 private:
  Rng rng_;
  std::size_t max_steps_;
  std::size_t elapsed_ = 0;
  bool needs_reset_ = true;
};

class CartPole final : public ClassicControlEnv {
 public:
  static constexpr double kGravity = 9.8;
  static constexpr double kMassCart = 1.0;
  static constexpr double kMassPole = 0.1;
  static constexpr double kTotalMass = kMassCart + kMassPole;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kPoleMassLength = kMassPole * kHalfLength;
  static constexpr double kForceMag = 10.0;
  static constexpr double kTau = 0.02;
  static constexpr double kThetaThreshold = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
  static constexpr double kXThreshold = 2.4;

  CartPole() : ClassicControlEnv(4, 500) {}

  std::string_view name() const override { return "CartPole-v1"; }
  std::size_t observation_dim() const override { return 4; }
  ActionSpace action_space() const override { return {ActionSpace::Kind::kDiscrete, 2, 0, 1}; }

 private:
  void sample_initial_state(Rng& rng) override;
  std::pair<double, bool> advance(const Action& action) override;
  Observation observe() const override { return state_; }
};

class Pendulum final : public ClassicControlEnv {
 public:
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;

  Pendulum() : ClassicControlEnv(2, 200) {}

  std::string_view name() const override { return "Pendulum-v1"; }
  std::size_t observation_dim() const override { return 3; }
  ActionSpace action_space() const override {
    return {ActionSpace::Kind::kBox, 1, -kMaxTorque, kMaxTorque};
  }

 private:
  void sample_initial_state(Rng& rng) override;
  std::pair<double, bool> advance(const Action& action) override;
  Observation observe() const override;
};

class Acrobot final : public ClassicControlEnv {
 public:
  static constexpr double kDt = 0.2;
  static constexpr double kLinkLength1 = 1.0;
  static constexpr double kLinkMass1 = 1.0;
  static constexpr double kLinkMass2 = 1.0;
  static constexpr double kLinkCom1 = 0.5;
  static constexpr double kLinkCom2 = 0.5;
  static constexpr double kLinkMoi = 1.0;
  static constexpr double kMaxVel1 = 4.0 * 3.14159265358979323846;
  static constexpr double kMaxVel2 = 9.0 * 3.14159265358979323846;

  Acrobot() : ClassicControlEnv(4, 500) {}

  std::string_view name() const override { return "Acrobot-v1"; }
  std::size_t observation_dim() const override { return 6; }
  ActionSpace action_space() const override { return {ActionSpace::Kind::kDiscrete, 3, 0, 2}; }

 private:
  void sample_initial_state(Rng& rng) override;
  std::pair<double, bool> advance(const Action& action) override;
  Observation observe() const override;
};

// Throws ConfigError for names outside {CartPole-v1, Pendulum-v1, Acrobot-v1}.
std::unique_ptr<ClassicControlEnv> make_env(std::string_view name);

// Default dimension labels for an environment's observation vector.
std::vector<std::string> default_observation_labels(std::string_view name);

// Wrap to [-pi, pi) with floor semantics for the modulo.
double angle_normalize(double x);

}  // namespace markovlens
