#include <doctest.h>

#include <cmath>

#include "markovlens/errors.hpp"
#include "markovlens/nn.hpp"

using namespace markovlens;
using namespace markovlens::nn;

namespace {

MlpParams random_params(std::size_t in, std::size_t out, Rng& rng, std::size_t hidden = kHidden) {
  MlpParams p = init_orthogonal(in, out, 1.0, rng, hidden);
  p.for_each_tensor([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += rng.normal(0.0, 0.1);
  });
  return p;
}

// Largest |analytic - central difference| / max(|analytic|, |fd|) over all entries
// whose magnitude is above the roundoff floor of the difference quotient.
double max_relative_error(MlpParams params, const Vector& x, const Vector& g) {
  const MlpParams analytic = mlp_backward(params, x, g);
  const double h = 1e-3;
  double worst = 0.0;
  std::vector<double> flat_analytic;
  MlpParams copy = analytic;
  copy.for_each_tensor([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) flat_analytic.push_back(t.data()[i]);
  });
  std::size_t k = 0;
  params.for_each_tensor([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i, ++k) {
      const double orig = t.data()[i];
      auto at = [&](double offset) {
        t.data()[i] = orig + offset;
        return g.dot(mlp_forward(params, x));
      };
      // Five-point stencil.
      const double fd = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
      t.data()[i] = orig;
      const double a = flat_analytic[k];
      const double scale = std::max(std::abs(a), std::abs(fd));
      if (scale < 1e-7) {
        worst = std::max(worst, std::abs(a - fd) / 1e-7);
      } else {
        worst = std::max(worst, std::abs(a - fd) / scale);
      }
    }
  });
  return worst;
}

}  // namespace

TEST_CASE("zero parameters give zero output") {
  const MlpParams p = MlpParams::zeros(3, 2);
  const Vector y = mlp_forward(p, Vector::Constant(3, 0.7));
  CHECK(y.isZero(0.0));
}

TEST_CASE("single unit identity path") {
  MlpParams p = MlpParams::zeros(1, 1, 1);
  p.w1(0, 0) = 1.0;
  p.w2(0, 0) = 1.0;
  p.w3(0, 0) = 1.0;
  CHECK(mlp_forward(p, Vector::Zero(1))(0) == 0.0);
}

TEST_CASE("random parameters give finite outputs") {
  Rng rng(1);
  const MlpParams p = random_params(4, 3, rng);
  for (int i = 0; i < 20; ++i) {
    Vector x(4);
    for (int j = 0; j < 4; ++j) x(j) = rng.normal(0.0, 10.0);
    CHECK(mlp_forward(p, x).allFinite());
  }
}

TEST_CASE("batched forward matches per-sample forward") {
  Rng rng(2);
  const MlpParams p = random_params(3, 2, rng);
  Matrix xs(3, 5);
  for (Eigen::Index i = 0; i < xs.size(); ++i) xs.data()[i] = rng.normal();
  const ForwardCache cache = mlp_forward_batch(p, xs);
  for (int k = 0; k < 5; ++k) CHECK((cache.output.col(k) - mlp_forward(p, xs.col(k))).norm() < 1e-14);
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
  Rng rng(3);
  const MlpParams p = random_params(4, 2, rng);
  MlpParams g = mlp_backward(p, Vector::Ones(4), Vector::Zero(2));
  CHECK(g.squared_norm() == 0.0);
}

TEST_CASE("output bias gradient equals the output gradient") {
  MlpParams p = MlpParams::zeros(2, 3);
  Vector og(3);
  og << 0.5, -1.0, 2.0;
  const MlpParams g = mlp_backward(p, Vector::Ones(2), og);
  CHECK((g.b3 - og).norm() == 0.0);
}

TEST_CASE("gradients match central finite differences") {
  Rng rng(4);
  for (int draw = 0; draw < 10; ++draw) {
    const std::size_t in = 1 + draw % 6;
    const std::size_t out = 1 + draw % 3;
    const MlpParams p = random_params(in, out, rng);
    Vector x(static_cast<Eigen::Index>(in));
    Vector g(static_cast<Eigen::Index>(out));
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = rng.normal();
    for (Eigen::Index j = 0; j < g.size(); ++j) g(j) = rng.normal();
    CHECK(max_relative_error(p, x, g) < 1e-6);
  }
}

TEST_CASE("batched backward sums per-sample gradients") {
  Rng rng(5);
  const MlpParams p = random_params(3, 2, rng);
  Matrix xs(3, 4), gs(2, 4);
  for (Eigen::Index i = 0; i < xs.size(); ++i) xs.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < gs.size(); ++i) gs.data()[i] = rng.normal();
  const MlpParams batch = mlp_backward(p, mlp_forward_batch(p, xs), gs);
  MlpParams sum = MlpParams::zeros(3, 2);
  for (int k = 0; k < 4; ++k) {
    const MlpParams one = mlp_backward(p, Vector(xs.col(k)), Vector(gs.col(k)));
    sum.w1 += one.w1, sum.b1 += one.b1, sum.w2 += one.w2, sum.b2 += one.b2, sum.w3 += one.w3, sum.b3 += one.b3;
  }
  CHECK((batch.w1 - sum.w1).norm() < 1e-12);
  CHECK((batch.b2 - sum.b2).norm() < 1e-12);
  CHECK((batch.w3 - sum.w3).norm() < 1e-12);
}

TEST_CASE("orthogonal init") {
  Rng rng(6);
  Matrix w(64, 4);
  orthogonal_(w, std::sqrt(2.0), rng);
  const Matrix gram = w.transpose() * w;
  CHECK((gram - 2.0 * Matrix::Identity(4, 4)).norm() < 1e-12);

  Matrix wide(2, 64);
  orthogonal_(wide, 0.01, rng);
  CHECK((wide * wide.transpose() - 1e-4 * Matrix::Identity(2, 2)).norm() < 1e-16);

  const MlpParams p = init_orthogonal(4, 2, 0.01, rng);
  CHECK(p.b1.isZero(0.0));
  CHECK(p.b3.isZero(0.0));
}

TEST_CASE("adam first step") {
  MlpParams p = MlpParams::zeros(1, 1, 1);
  MlpParams g = MlpParams::zeros(1, 1, 1);
  g.for_each_tensor([](auto& t) { t.setOnes(); });
  auto [next, state] = adam_step(p, g, AdamState::for_params(p), 0.001);
  CHECK(state.step == 1);
  const double expected = -0.001 * 1.0 / (1.0 + 1e-8);
  next.for_each_tensor([&](auto& t) { CHECK(std::abs(t(0) - expected) < 1e-18); });
}

TEST_CASE("adam zero gradient keeps parameters") {
  Rng rng(8);
  const MlpParams p = random_params(2, 2, rng);
  auto [next, state] = adam_step(p, MlpParams::zeros(2, 2), AdamState::for_params(p), 0.01);
  CHECK((next.w2 - p.w2).norm() == 0.0);
  CHECK((next.b3 - p.b3).norm() == 0.0);
}

TEST_CASE("adam matches a scalar reference over many steps") {
  Rng rng(9);
  MlpParams p = MlpParams::zeros(1, 1, 1);
  AdamState st = AdamState::for_params(p);
  double theta = 0.0, m = 0.0, v = 0.0;
  const double lr = 3e-4, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 50; ++t) {
    const double grad = rng.normal();
    MlpParams g = MlpParams::zeros(1, 1, 1);
    g.w1(0, 0) = grad;
    std::tie(p, st) = adam_step(p, g, st, lr);
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad * grad;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    theta -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  CHECK(std::abs(p.w1(0, 0) - theta) < 1e-15);
}

TEST_CASE("adam is deterministic and rejects non-finite gradients") {
  Rng rng(10);
  const MlpParams p = random_params(2, 1, rng);
  const MlpParams g = random_params(2, 1, rng);
  auto a = adam_step(p, g, AdamState::for_params(p), 0.01);
  auto b = adam_step(p, g, AdamState::for_params(p), 0.01);
  CHECK((a.first.w2 - b.first.w2).norm() == 0.0);
  MlpParams bad = g;
  bad.b2(0) = std::nan("");
  CHECK_THROWS_AS(adam_step(p, bad, AdamState::for_params(p), 0.01), TrainingError);
}
