#include <doctest.h>

#include <cmath>
#include <numeric>

#include "markovlens/errors.hpp"
#include "markovlens/ppo.hpp"

using namespace markovlens;
using namespace markovlens::ppo;

namespace {

// A_t = sum_l (gamma lambda)^l delta_{t+l}, stopping after the first done.
std::vector<double> gae_by_summation(const std::vector<double>& r, const std::vector<double>& v,
                                     const std::vector<bool>& d, double bootstrap, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : bootstrap;
    delta[t] = r[t] + gamma * next * (d[t] ? 0.0 : 1.0) - v[t];
  }
  std::vector<double> a(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      a[t] += w * delta[l];
      if (d[l]) break;
      w *= gamma * lambda;
    }
  }
  return a;
}

void jitter(Policy& p, Rng& rng, double sd) {
  p.actor.for_each_tensor([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += rng.normal(0.0, sd);
  });
  p.critic.for_each_tensor([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += rng.normal(0.0, sd);
  });
  for (Eigen::Index i = 0; i < p.log_std.size(); ++i) p.log_std(i) += rng.normal(0.0, 0.3);
}

struct Batch {
  nn::Matrix obs, actions;
  std::vector<double> old_lp, adv, ret;
};

Batch make_batch(const Policy& p, Rng& rng, int n, bool spread) {
  Batch b;
  const auto dim = static_cast<Eigen::Index>(p.observation_dim());
  b.obs.resize(dim, n);
  b.actions.resize(static_cast<Eigen::Index>(p.action_width()), n);
  for (int i = 0; i < n; ++i) {
    Observation o(static_cast<std::size_t>(dim));
    for (double& x : o) x = rng.normal();
    for (Eigen::Index j = 0; j < dim; ++j) b.obs(j, i) = o[static_cast<std::size_t>(j)];
    const ActSample s = sample_action(p, o, rng);
    b.actions.col(i) = s.action;
    // Log-ratio offsets stay clear of the clip kinks at log 0.8 and log 1.2.
    const double offsets[] = {-0.5, -0.1, 0.0, 0.1, 0.5};
    const double shift = offsets[static_cast<int>(rng.uniform(0, 5))];
    b.old_lp.push_back(s.log_prob + (spread ? shift : 0.0));
    b.adv.push_back(rng.normal());
    b.ret.push_back(rng.normal());
  }
  return b;
}

double total_loss(const Policy& p, const Batch& b, const PpoConfig& cfg) {
  return minibatch_loss(p, b.obs, b.actions, b.old_lp, b.adv, b.ret, cfg).total;
}

// Max relative error of the analytic loss gradient against central differences.
double loss_gradient_error(Policy p, const Batch& b, const PpoConfig& cfg) {
  const MinibatchLoss analytic = minibatch_loss(p, b.obs, b.actions, b.old_lp, b.adv, b.ret, cfg);
  const double h = 1e-3;
  double worst = 0.0;
  auto compare = [&](double& param, double a) {
    const double orig = param;
    auto at = [&](double offset) {
      param = orig + offset;
      return total_loss(p, b, cfg);
    };
    // Five-point stencil.
    const double fd = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
    param = orig;
    const double scale = std::max({std::abs(a), std::abs(fd), 1e-6});
    worst = std::max(worst, std::abs(a - fd) / scale);
  };
  auto check_all = [&](nn::MlpParams& params, nn::MlpParams grads) {
    std::vector<double> flat;
    grads.for_each_tensor([&](auto& t) { flat.insert(flat.end(), t.data(), t.data() + t.size()); });
    std::size_t k = 0;
    params.for_each_tensor([&](auto& t) {
      for (Eigen::Index i = 0; i < t.size(); ++i) compare(t.data()[i], flat[k++]);
    });
  };
  check_all(p.actor, analytic.grads.actor);
  check_all(p.critic, analytic.grads.critic);
  for (Eigen::Index i = 0; i < p.log_std.size(); ++i) compare(p.log_std(i), analytic.grads.log_std(i));
  return worst;
}

}  // namespace

TEST_CASE("gae two-step fixtures") {
  const std::vector<double> r{1.0, 1.0}, v{0.5, 0.5};
  const std::vector<bool> d{false, false};
  // delta_1 = 1 - 0.5 with a zero bootstrap; A_0 = 0.995 + 0.9405 * 0.5.
  const GaeResult zero = compute_gae(r, v, d, 0.0, 0.99, 0.95);
  CHECK(std::abs(zero.advantages[0] - 1.46525) < 1e-12);
  CHECK(std::abs(zero.advantages[1] - 0.5) < 1e-12);
  // With V(s_2) = 0.5 both deltas are 0.995.
  const GaeResult half = compute_gae(r, v, d, 0.5, 0.99, 0.95);
  CHECK(std::abs(half.advantages[0] - 1.9307975) < 1e-12);
  CHECK(std::abs(half.advantages[1] - 0.995) < 1e-12);
  CHECK(std::abs(half.returns[0] - (1.9307975 + 0.5)) < 1e-12);
}

TEST_CASE("gae with lambda zero is the td residual") {
  Rng rng(1);
  std::vector<double> r(20), v(20);
  std::vector<bool> d(20, false);
  for (int i = 0; i < 20; ++i) r[i] = rng.normal(), v[i] = rng.normal();
  d[7] = true;
  const GaeResult g = compute_gae(r, v, d, 0.3, 0.99, 0.0);
  for (int t = 0; t < 20; ++t) {
    const double next = t + 1 < 20 ? v[t + 1] : 0.3;
    CHECK(g.advantages[t] == doctest::Approx(r[t] + 0.99 * next * (d[t] ? 0.0 : 1.0) - v[t]).epsilon(1e-14));
  }
  CHECK(g.advantages[7] == doctest::Approx(r[7] - v[7]).epsilon(1e-14));
}

TEST_CASE("gae matches direct summation") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform(0, 60));
    std::vector<double> r(n), v(n);
    std::vector<bool> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rng.normal();
      v[i] = rng.normal();
      d[i] = rng.uniform(0, 1) < 0.1;
    }
    const double gamma = trial % 3 == 0 ? 1.0 : rng.uniform(0.8, 1.0);
    const double lambda = trial % 3 == 0 ? 1.0 : rng.uniform(0.0, 1.0);
    const double boot = rng.normal();
    const GaeResult g = compute_gae(r, v, d, boot, gamma, lambda);
    const auto oracle = gae_by_summation(r, v, d, boot, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      CHECK(std::abs(g.advantages[t] - oracle[t]) <= 1e-10);
      CHECK(std::abs(g.returns[t] - (oracle[t] + v[t])) <= 1e-10);
    }
  }
}

TEST_CASE("gae with unit discount is reward-to-go plus bootstrap minus value") {
  Rng rng(3);
  std::vector<double> r(30), v(30);
  for (int i = 0; i < 30; ++i) r[i] = rng.normal(), v[i] = rng.normal();
  const GaeResult g = compute_gae(r, v, std::vector<bool>(30, false), 1.7, 1.0, 1.0);
  for (int t = 0; t < 30; ++t) {
    const double togo = std::accumulate(r.begin() + t, r.end(), 0.0);
    CHECK(std::abs(g.advantages[t] - (togo + 1.7 - v[t])) <= 1e-10);
  }
}

TEST_CASE("discrete policy distribution") {
  Rng rng(4);
  Policy p = Policy::create(4, {ActionSpace::Kind::kDiscrete, 3, 0, 2}, rng);
  jitter(p, rng, 0.2);
  for (int i = 0; i < 20; ++i) {
    Observation o{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const nn::Vector lp = p.log_probabilities(o);
    CHECK(std::abs(lp.array().exp().sum() - 1.0) < 1e-12);
    const double h = p.entropy(o);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(3.0) + 1e-12);
  }
  // A fresh policy's head is nearly uniform.
  const Policy fresh = Policy::create(4, {ActionSpace::Kind::kDiscrete, 2, 0, 1}, rng);
  CHECK(fresh.entropy({0.1, 0.2, 0.3, 0.4}) == doctest::Approx(std::log(2.0)).epsilon(1e-3));
}

TEST_CASE("gaussian policy log-prob and entropy") {
  Rng rng(5);
  Policy p = Policy::create(3, {ActionSpace::Kind::kBox, 1, -2, 2}, rng);
  jitter(p, rng, 0.2);
  const Observation o{0.3, -0.2, 0.5};
  const double mu = nn::mlp_forward(p.actor, Eigen::Map<const nn::Vector>(o.data(), 3))(0);
  const double sd = std::exp(p.log_std(0));
  const double a = 1.3;
  const double expected = -0.5 * std::pow((a - mu) / sd, 2) - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
  CHECK(p.log_prob(o, nn::Vector::Constant(1, a)) == doctest::Approx(expected).epsilon(1e-13));
  CHECK(p.entropy(o) == doctest::Approx(0.5 * (1.0 + std::log(2.0 * M_PI * sd * sd))).epsilon(1e-13));

  // Means beyond the bounds are clipped on execution only.
  p.actor.b3(0) = 50.0;
  const Action act = p.act_deterministic(o);
  CHECK(std::get<std::vector<double>>(act)[0] == 2.0);
}

TEST_CASE("sampled actions follow the policy") {
  Rng rng(6);
  Policy p = Policy::create(2, {ActionSpace::Kind::kDiscrete, 2, 0, 1}, rng);
  p.actor.b3(0) = 1.0;  // p(0) = e / (e + 1)
  p.actor.w3.setZero();
  int zeros = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) zeros += std::get<std::int64_t>(sample_action(p, {0.0, 0.0}, rng).env_action) == 0;
  const double p0 = std::exp(1.0) / (std::exp(1.0) + 1.0);
  CHECK(std::abs(zeros / double(n) - p0) < 4.0 * std::sqrt(p0 * (1 - p0) / n));
}

TEST_CASE("ratio one: policy loss is minus the mean advantage") {
  Rng rng(7);
  Policy p = Policy::create(4, {ActionSpace::Kind::kDiscrete, 2, 0, 1}, rng);
  Batch b = make_batch(p, rng, 32, false);
  PpoConfig cfg;
  const MinibatchLoss l = minibatch_loss(p, b.obs, b.actions, b.old_lp, b.adv, b.ret, cfg);
  const double mean_adv = std::accumulate(b.adv.begin(), b.adv.end(), 0.0) / 32.0;
  CHECK(l.policy_loss == doctest::Approx(-mean_adv).epsilon(1e-12));
  CHECK(l.clip_fraction == 0.0);
  CHECK(std::abs(l.approx_kl) < 1e-14);

  std::fill(b.adv.begin(), b.adv.end(), 0.0);
  const MinibatchLoss z = minibatch_loss(p, b.obs, b.actions, b.old_lp, b.adv, b.ret, cfg);
  CHECK(z.policy_loss == 0.0);
  CHECK(z.grads.actor.squared_norm() == 0.0);
  CHECK(z.grads.critic.squared_norm() > 0.0);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(8);
  PpoConfig cfg;
  cfg.entropy_coef = 0.01;
  SUBCASE("discrete") {
    for (int trial = 0; trial < 3; ++trial) {
      Policy p = Policy::create(4, {ActionSpace::Kind::kDiscrete, 3, 0, 2}, rng);
      jitter(p, rng, 0.1);
      const Batch b = make_batch(p, rng, 16, true);
      CHECK(loss_gradient_error(p, b, cfg) < 1e-5);
    }
  }
  SUBCASE("continuous") {
    for (int trial = 0; trial < 3; ++trial) {
      Policy p = Policy::create(3, {ActionSpace::Kind::kBox, 2, -2, 2}, rng);
      jitter(p, rng, 0.1);
      const Batch b = make_batch(p, rng, 16, true);
      CHECK(loss_gradient_error(p, b, cfg) < 1e-5);
    }
  }
}

TEST_CASE("training budget and determinism") {
  PpoConfig cfg;
  cfg.rollout_length = 256;
  cfg.total_timesteps = 256;
  const EnvRecipe recipe{"CartPole-v1", std::nullopt, {}};
  const TrainResult a = train(recipe, cfg, 10000);
  CHECK(a.updates == 1);
  CHECK(a.timesteps == 256);
  const TrainResult b = train(recipe, cfg, 10000);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].timestep == b.curve[i].timestep);
    CHECK(a.curve[i].episode_return == b.curve[i].episode_return);
  }
  CHECK((a.policy.actor.w1 - b.policy.actor.w1).norm() == 0.0);

  cfg.total_timesteps = 600;
  CHECK(train(recipe, cfg, 1).updates == 3);
  cfg.total_timesteps = 100;
  CHECK_THROWS_AS(train(recipe, cfg, 1), ConfigError);
}

TEST_CASE("continuous training runs on pendulum") {
  PpoConfig cfg;
  cfg.rollout_length = 400;
  cfg.total_timesteps = 800;
  const TrainResult r = train({"Pendulum-v1", std::nullopt, {}}, cfg, 3);
  CHECK(r.updates == 2);
  CHECK(r.curve.size() == 4);
  CHECK(r.policy.log_std.allFinite());
}

TEST_CASE("final return averages the last episodes") {
  std::vector<CurvePoint> c;
  for (int i = 0; i < 15; ++i) c.push_back({static_cast<std::size_t>(i * 10), static_cast<double>(i)});
  CHECK(final_return(c) == doctest::Approx(9.5));
  CHECK(final_return({{5, 3.0}}) == 3.0);
  CHECK(final_return({}) == 0.0);
}
