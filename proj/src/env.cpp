#include "markovlens/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "markovlens/errors.hpp"

namespace markovlens {

namespace {

constexpr double kPi = std::numbers::pi;

double python_mod(double a, double b) {
  double r = std::fmod(a, b);
  if (r != 0.0 && (r < 0.0) != (b < 0.0)) r += b;
  return r;
}

double wrap(double x, double lo, double hi) {
  const double diff = hi - lo;
  while (x > hi) x -= diff;
  while (x < lo) x += diff;
  return x;
}

std::int64_t discrete_action(const Action& action, const ActionSpace& space) {
  if (!space.contains(action)) throw ContractViolation("action outside the discrete action space");
  return std::get<std::int64_t>(action);
}

}  // namespace

bool ActionSpace::contains(const Action& action) const {
  if (discrete()) {
    const auto* a = std::get_if<std::int64_t>(&action);
    return a != nullptr && *a >= 0 && static_cast<std::size_t>(*a) < n;
  }
  const auto* a = std::get_if<std::vector<double>>(&action);
  return a != nullptr && a->size() == n &&
         std::all_of(a->begin(), a->end(), [](double v) { return std::isfinite(v); });
}

double angle_normalize(double x) { return python_mod(x + kPi, 2.0 * kPi) - kPi; }

// ---------------------------------------------------------------------------

Observation ClassicControlEnv::reset(std::optional<std::uint64_t> seed) {
  if (seed) rng_.reseed(*seed);
  sample_initial_state(rng_);
  elapsed_ = 0;
  needs_reset_ = false;
  return observe();
}

StepOutcome ClassicControlEnv::step(const Action& action) {
  if (needs_reset_) throw ContractViolation(std::string(name()) + ": step() called before reset()");
  if (!action_space().contains(action)) {
    throw ContractViolation(std::string(name()) + ": invalid action");
  }
  const auto [reward, terminated] = advance(action);
  ++elapsed_;
  const bool truncated = !terminated && elapsed_ >= max_episode_steps();
  needs_reset_ = terminated || truncated;
  return {observe(), reward, terminated, truncated};
}

void ClassicControlEnv::set_state(std::span<const double> state) {
  if (state.size() != state_.size()) throw ContractViolation("set_state: wrong state dimension");
  std::copy(state.begin(), state.end(), state_.begin());
  needs_reset_ = false;
}

// --- CartPole --------------------------------------------------------------

void CartPole::sample_initial_state(Rng& rng) {
  for (double& s : state_) s = rng.uniform(-0.05, 0.05);
}

std::pair<double, bool> CartPole::advance(const Action& action) {
  const double force = discrete_action(action, action_space()) == 1 ? kForceMag : -kForceMag;
  const double x = state_[0];
  const double x_dot = state_[1];
  const double theta = state_[2];
  const double theta_dot = state_[3];
  const double costheta = std::cos(theta);
  const double sintheta = std::sin(theta);

  const double temp = (force + kPoleMassLength * theta_dot * theta_dot * sintheta) / kTotalMass;
  const double thetaacc = (kGravity * sintheta - costheta * temp) /
                          (kHalfLength * (4.0 / 3.0 - kMassPole * costheta * costheta / kTotalMass));
  const double xacc = temp - kPoleMassLength * thetaacc * costheta / kTotalMass;

  // Explicit Euler: positions advance with the pre-update velocities.
  state_[0] = x + kTau * x_dot;
  state_[1] = x_dot + kTau * xacc;
  state_[2] = theta + kTau * theta_dot;
  state_[3] = theta_dot + kTau * thetaacc;

  const bool terminated = state_[0] < -kXThreshold || state_[0] > kXThreshold ||
                          state_[2] < -kThetaThreshold || state_[2] > kThetaThreshold;
  return {1.0, terminated};
}

// --- Pendulum --------------------------------------------------------------

void Pendulum::sample_initial_state(Rng& rng) {
  state_[0] = rng.uniform(-kPi, kPi);
  state_[1] = rng.uniform(-1.0, 1.0);
}

std::pair<double, bool> Pendulum::advance(const Action& action) {
  if (!action_space().contains(action)) throw ContractViolation("Pendulum-v1: invalid action");
  const double u = std::clamp(std::get<std::vector<double>>(action)[0], -kMaxTorque, kMaxTorque);
  const double th = state_[0];
  const double thdot = state_[1];

  const double th_norm = angle_normalize(th);
  const double costs = th_norm * th_norm + 0.1 * thdot * thdot + 0.001 * (u * u);

  double newthdot =
      thdot + (3 * kGravity / (2 * kLength) * std::sin(th) + 3.0 / (kMass * kLength * kLength) * u) * kDt;
  newthdot = std::clamp(newthdot, -kMaxSpeed, kMaxSpeed);
  state_[0] = th + newthdot * kDt;
  state_[1] = newthdot;
  return {-costs, false};
}

Observation Pendulum::observe() const {
  return {std::cos(state_[0]), std::sin(state_[0]), state_[1]};
}

// --- Acrobot ---------------------------------------------------------------

namespace {

using AcrobotState = std::array<double, 5>;  // theta1, theta2, dtheta1, dtheta2, torque

AcrobotState acrobot_derivs(const AcrobotState& s) {
  constexpr double m1 = Acrobot::kLinkMass1;
  constexpr double m2 = Acrobot::kLinkMass2;
  constexpr double l1 = Acrobot::kLinkLength1;
  constexpr double lc1 = Acrobot::kLinkCom1;
  constexpr double lc2 = Acrobot::kLinkCom2;
  constexpr double i1 = Acrobot::kLinkMoi;
  constexpr double i2 = Acrobot::kLinkMoi;
  constexpr double g = 9.8;
  const double a = s[4];
  const double theta1 = s[0];
  const double theta2 = s[1];
  const double dtheta1 = s[2];
  const double dtheta2 = s[3];

  const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2 * l1 * lc2 * std::cos(theta2)) + i1 + i2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + i2;
  const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - kPi / 2.0);
  const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * std::sin(theta2) -
                      2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * std::sin(theta2) +
                      (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - kPi / 2) + phi2;
  // "book" variant of the second-link acceleration.
  const double ddtheta2 =
      (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
      (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
  const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
  return {dtheta1, dtheta2, ddtheta1, ddtheta2, 0.0};
}

AcrobotState rk4_step(const AcrobotState& y0, double dt) {
  const double dt2 = dt / 2.0;
  auto axpy = [](const AcrobotState& y, double h, const AcrobotState& k) {
    AcrobotState out;
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] + h * k[i];
    return out;
  };
  const AcrobotState k1 = acrobot_derivs(y0);
  const AcrobotState k2 = acrobot_derivs(axpy(y0, dt2, k1));
  const AcrobotState k3 = acrobot_derivs(axpy(y0, dt2, k2));
  const AcrobotState k4 = acrobot_derivs(axpy(y0, dt, k3));
  AcrobotState out;
  for (std::size_t i = 0; i < y0.size(); ++i) {
    out[i] = y0[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return out;
}

}  // namespace

void Acrobot::sample_initial_state(Rng& rng) {
  for (double& s : state_) s = rng.uniform(-0.1, 0.1);
}

std::pair<double, bool> Acrobot::advance(const Action& action) {
  static constexpr std::array<double, 3> kTorques{-1.0, 0.0, 1.0};
  const double torque = kTorques[static_cast<std::size_t>(discrete_action(action, action_space()))];

  const AcrobotState next = rk4_step({state_[0], state_[1], state_[2], state_[3], torque}, kDt);
  state_[0] = wrap(next[0], -kPi, kPi);
  state_[1] = wrap(next[1], -kPi, kPi);
  state_[2] = std::clamp(next[2], -kMaxVel1, kMaxVel1);
  state_[3] = std::clamp(next[3], -kMaxVel2, kMaxVel2);

  const bool terminated = -std::cos(state_[0]) - std::cos(state_[1] + state_[0]) > 1.0;
  return {terminated ? 0.0 : -1.0, terminated};
}

Observation Acrobot::observe() const {
  return {std::cos(state_[0]), std::sin(state_[0]), std::cos(state_[1]),
          std::sin(state_[1]), state_[2],           state_[3]};
}

// ---------------------------------------------------------------------------

std::unique_ptr<ClassicControlEnv> make_env(std::string_view name) {
  if (name == "CartPole-v1") return std::make_unique<CartPole>();
  if (name == "Pendulum-v1") return std::make_unique<Pendulum>();
  if (name == "Acrobot-v1") return std::make_unique<Acrobot>();
  throw ConfigError("unknown environment '" + std::string(name) +
                    "' (expected CartPole-v1, Pendulum-v1 or Acrobot-v1)");
}

std::vector<std::string> default_observation_labels(std::string_view name) {
  if (name == "CartPole-v1") return {"CartPos", "CartVel", "PoleAngle", "PoleAngVel"};
  if (name == "Pendulum-v1") return {"CosTheta", "SinTheta", "ThetaDot"};
  if (name == "Acrobot-v1") {
    return {"CosTheta1", "SinTheta1", "CosTheta2", "SinTheta2", "Theta1Dot", "Theta2Dot"};
  }
  throw ConfigError("unknown environment '" + std::string(name) + "'");
}

}  // namespace markovlens
