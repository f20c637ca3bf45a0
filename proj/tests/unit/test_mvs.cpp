#include <doctest.h>

#include <cmath>

#include "markovlens/errors.hpp"
#include "markovlens/mvs.hpp"
#include "markovlens/rng.hpp"

using namespace markovlens;

namespace {

// Direct transcription of the score definition with explicit loops.
double naive_mvs(const PcmciResult& r, std::size_t tau_max, double alpha) {
  double num = 0.0, weights = 0.0;
  for (std::size_t k = 2; k <= tau_max; ++k) weights += static_cast<double>(k) - 1.0;
  for (std::size_t i = 0; i < r.n_vars; ++i) {
    for (std::size_t j = 0; j < r.n_vars; ++j) {
      for (std::size_t k = 2; k <= tau_max; ++k) {
        const double p = r.p[(i * r.n_vars + j) * (r.tau_max + 1) + k];
        const double v = r.val[(i * r.n_vars + j) * (r.tau_max + 1) + k];
        if (p <= alpha) num += (static_cast<double>(k) - 1.0) * std::fabs(v) * -std::log(std::max(p, 1e-10));
      }
    }
  }
  return num / (static_cast<double>(r.n_vars * r.n_vars) * weights);
}

}  // namespace

TEST_CASE("no lag-two links gives zero") {
  PcmciResult r = PcmciResult::empty(4, 5, 0.05);
  r.p_at(0, 1, 1) = 1e-10;
  r.val_at(0, 1, 1) = 0.9;
  r.p_at(2, 2, 3) = 0.2;
  r.val_at(2, 2, 3) = 0.7;
  const MvsReport m = compute_mvs(r);
  CHECK(m.score == 0.0);
  CHECK(m.contributions.empty());
}

TEST_CASE("single and double link fixtures") {
  PcmciResult r = PcmciResult::empty(4, 5, 0.05);
  r.p_at(1, 2, 2) = 0.01;
  r.val_at(1, 2, 2) = -0.5;
  CHECK(std::abs(compute_mvs(r).score - 0.01439116) < 1e-8);

  r.p_at(3, 0, 3) = 0.001;
  r.val_at(3, 0, 3) = 0.2;
  const MvsReport m = compute_mvs(r);
  CHECK(std::abs(m.score - 0.03166054) < 1e-8);
  CHECK(m.contributions.size() == 2);
}

TEST_CASE("matches the naive loop") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 5;
    PcmciResult r = PcmciResult::empty(n, 5, 0.05);
    for (std::size_t e = 0; e < r.val.size(); ++e) {
      r.val[e] = rng.uniform(-1.0, 1.0);
      r.p[e] = rng.uniform(0, 1) < 0.3 ? std::exp(rng.uniform(std::log(1e-12), 0.0)) : rng.uniform(0.0, 1.0);
    }
    CHECK(std::abs(compute_mvs(r).score - naive_mvs(r, 5, 0.05)) < 1e-14);
    MvsConfig c;
    c.tau_max = 3;
    c.alpha_level = 0.01;
    CHECK(std::abs(compute_mvs(r, c).score - naive_mvs(r, 3, 0.01)) < 1e-14);
  }
}

TEST_CASE("floor caps the log term") {
  PcmciResult r = PcmciResult::empty(2, 2, 0.05);
  r.p_at(0, 1, 2) = 0.0;
  r.val_at(0, 1, 2) = 1.0;
  CHECK(compute_mvs(r, {2, 0.05, 1e-10}).score == doctest::Approx(-std::log(1e-10) / 4.0));
}

TEST_CASE("score is non-negative and config is checked") {
  PcmciResult r = PcmciResult::empty(3, 3, 0.05);
  r.p_at(0, 0, 2) = 0.05;
  r.val_at(0, 0, 2) = -0.1;
  CHECK(compute_mvs(r, {3, 0.05, 1e-10}).score > 0.0);
  CHECK_THROWS_AS(compute_mvs(r, {5, 0.05, 1e-10}), ContractViolation);
  CHECK_THROWS_AS(compute_mvs(r, {1, 0.05, 1e-10}), ContractViolation);
}
