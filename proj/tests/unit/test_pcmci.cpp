#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "markovlens/errors.hpp"
#include "markovlens/pcmci.hpp"
#include "markovlens/rng.hpp"

using namespace markovlens;

namespace {

TimeSeriesPanel white_noise(Rng& rng, int t, int n) {
  TimeSeriesPanel p;
  p.data.resize(t, n);
  for (Eigen::Index i = 0; i < p.data.size(); ++i) p.data.data()[i] = rng.normal();
  return p;
}

}  // namespace

TEST_CASE("result shape") {
  Rng rng(1);
  const PcmciResult r = run_pcmci(white_noise(rng, 300, 4), 5, 0.05);
  CHECK(r.n_vars == 4);
  CHECK(r.tau_max == 5);
  CHECK(r.val.size() == 4 * 4 * 6);
  CHECK(r.p.size() == 4 * 4 * 6);
  for (double p : r.p) {
    CHECK(p >= kPValueFloor);
    CHECK(p <= 1.0);
  }
  for (double v : r.val) CHECK(std::abs(v) <= 1.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.p_at(i, i, 0) == 1.0);
}

TEST_CASE("panel validation") {
  Rng rng(2);
  CHECK_THROWS_AS(run_pcmci(white_noise(rng, 60, 3), 5, 0.05), ContractViolation);
  CHECK_THROWS_AS(run_pcmci(white_noise(rng, 500, 1), 5, 0.05), ContractViolation);
  TimeSeriesPanel bad = white_noise(rng, 500, 3);
  bad.data(10, 1) = std::nan("");
  CHECK_THROWS_AS(run_pcmci(bad, 5, 0.05), ContractViolation);
}

TEST_CASE("lagged copy is recovered") {
  Rng rng(3);
  TimeSeriesPanel p = white_noise(rng, 1000, 3);
  for (int t = 3; t < 1000; ++t) p.data(t, 1) = p.data(t - 3, 0) + 0.01 * rng.normal();
  const PcmciResult r = run_pcmci(p, 5, 0.05);
  CHECK(r.val_at(0, 1, 3) > 0.9);
  CHECK(r.p_at(0, 1, 3) < 1e-6);
}

TEST_CASE("pc1 keeps the autoregressive parent") {
  Rng rng(4);
  TimeSeriesPanel p = white_noise(rng, 2000, 2);
  for (int t = 1; t < 2000; ++t) p.data(t, 0) += 0.8 * p.data(t - 1, 0);
  const ParentSet ps = pc1_select_parents(p, 0, 5, 0.05);
  CHECK(std::find(ps.parents.begin(), ps.parents.end(), LaggedVar{0, 1}) != ps.parents.end());
  CHECK(ps.parents.size() == ps.statistics.size());
  CHECK(ps.parents.front() == LaggedVar{0, 1});

  const ParentSet one = pc1_select_parents(p, 0, 1, 0.05);
  for (const LaggedVar& v : one.parents) CHECK(v.lag == 1);
}

TEST_CASE("pc1 survivor fraction under the null") {
  Rng rng(5);
  const double alpha = 0.05;
  const int panels = 200, n = 3, tau = 2;
  double survivors = 0.0;
  for (int k = 0; k < panels; ++k) {
    const TimeSeriesPanel p = white_noise(rng, 500, n);
    for (int j = 0; j < n; ++j) survivors += static_cast<double>(pc1_select_parents(p, j, tau, alpha).parents.size());
  }
  const double trials = panels * n * n * tau;
  const double frac = survivors / trials;
  const double se = std::sqrt(alpha * (1 - alpha) / trials);
  CHECK(std::abs(frac - alpha) <= 3.0 * se);
}

TEST_CASE("deterministic") {
  Rng rng(6);
  const TimeSeriesPanel p = white_noise(rng, 400, 3);
  const PcmciResult a = run_pcmci(p, 3, 0.05, 1);
  const PcmciResult b = run_pcmci(p, 3, 0.05, 2);
  CHECK(a.val == b.val);
  CHECK(a.p == b.p);
}

TEST_CASE("stronger coupling gives a stronger link") {
  double previous = 0.0;
  for (double c : {0.1, 0.3, 0.6}) {
    Rng rng(7);
    TimeSeriesPanel p = white_noise(rng, 1500, 2);
    for (int t = 2; t < 1500; ++t) p.data(t, 1) += c * p.data(t - 2, 0);
    const double v = run_pcmci(p, 3, 0.05).val_at(0, 1, 2);
    CHECK(v > previous);
    previous = v;
  }
}

TEST_CASE("fisher combination") {
  CHECK(fisher_combine({1.0, 1.0, 1.0}) == 1.0);
  for (double p : {0.9, 0.3, 0.01, 1e-6}) CHECK(fisher_combine({p}) == doctest::Approx(p).epsilon(1e-12));
  const double x2 = -10.0 * std::log(0.05);
  const double ref = boost::math::cdf(boost::math::complement(boost::math::chi_squared(10), x2));
  CHECK(std::abs(fisher_combine(std::vector<double>(5, 0.05)) - ref) < 1e-12);
  CHECK(fisher_combine({1e-300, 1e-300}) >= kPValueFloor);
  CHECK_THROWS_AS(fisher_combine({}), ContractViolation);
}

TEST_CASE("aggregate runs") {
  PcmciResult a = PcmciResult::empty(2, 2, 0.05), b = PcmciResult::empty(2, 2, 0.05);
  a.val_at(0, 1, 2) = 0.4, a.p_at(0, 1, 2) = 0.01;
  b.val_at(0, 1, 2) = 0.2, b.p_at(0, 1, 2) = 0.2;
  const AggregatedResult agg = aggregate_runs({a, b});
  CHECK(agg.runs == 2);
  CHECK(agg.combined.val_at(0, 1, 2) == doctest::Approx(0.3));
  CHECK(agg.combined.p_at(0, 1, 2) == doctest::Approx(fisher_combine({0.01, 0.2})));
  CHECK(agg.combined.p_at(1, 0, 1) == 1.0);
  CHECK_THROWS_AS(aggregate_runs({a, PcmciResult::empty(2, 3, 0.05)}), ContractViolation);
  CHECK_THROWS_AS(aggregate_runs({}), ContractViolation);
}

TEST_CASE("link table ordering") {
  PcmciResult r = PcmciResult::empty(2, 2, 0.05);
  r.p_at(0, 1, 2) = 0.001, r.val_at(0, 1, 2) = 0.3;
  r.p_at(1, 1, 1) = 0.01, r.val_at(1, 1, 1) = 0.5;
  r.p_at(1, 0, 1) = 0.04;
  const auto all = link_table(r, false);
  CHECK(all.size() == 2 * 2 * 3 - 2);
  const auto sig = link_table(r, true);
  REQUIRE(sig.size() == 3);
  CHECK(sig[0].child == 0);
  CHECK(sig[0].parent == 1);
  CHECK(sig[0].lag == -1);
  CHECK(sig[1].child == 1);
  CHECK(sig[1].lag == -2);
  CHECK(sig[1].p_value == 0.001);
  CHECK(sig[2].p_value == 0.01);
}
