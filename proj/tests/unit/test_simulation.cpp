#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "transport/dgp.hpp"
#include "transport/error.hpp"
#include "transport/simulation.hpp"

using namespace transport;

namespace {

DiscreteLaw two_point_law(bool violate_transportability) {
  // X = (V, W) with V, W in {0, 1}; S depends on V only, A on X in the source.
  DiscreteLaw law;
  law.v_index_map = {0};
  for (int v = 0; v < 2; ++v)
    for (int w = 0; w < 2; ++w)
      for (int s = 0; s < 2; ++s)
        for (int a = 0; a < 2; ++a) {
          const double pv = v == 0 ? 0.4 : 0.6;
          const double pw = w == 0 ? 0.5 : 0.5;
          const double ps = v == 0 ? (s == 1 ? 0.7 : 0.3) : (s == 1 ? 0.2 : 0.8);
          const double p1 = 0.3 + 0.4 * w;
          const double pa = s == 1 ? (a == 1 ? p1 : 1 - p1) : 0.5;
          DiscreteAtom at;
          at.x = {double(v), double(w)};
          at.s = s;
          at.a = a;
          at.y0 = 1.0 + v + 0.5 * w;
          at.y1 = 2.0 + 3.0 * v - w + (violate_transportability && s == 0 ? 0.5 : 0.0);
          at.prob = pv * pw * ps * pa;
          law.atoms.push_back(at);
        }
  return law;
}

}  // namespace

TEST_SUITE("simulation") {

TEST_CASE("participation and outcome noise") {
  const auto sim = simulate_dgp(100000, 1);
  const double frac = static_cast<double>(sim.sample.n1()) / static_cast<double>(sim.sample.n());
  CHECK(std::abs(frac - 0.5) < 0.01);
  const auto dgp = benchmark_dgp();
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& r : sim.sample.source())
    if (r.a == 1) {
      acc += r.y - dgp->mu(1, r.x);
      ++count;
    }
  CHECK(std::abs(acc / static_cast<double>(count)) < 3.0 / std::sqrt(static_cast<double>(count)));
}

TEST_CASE("truth and nested regression closed form") {
  const auto sim = simulate_dgp(50, 2);
  CHECK(sim.truth.theta[1] - sim.truth.theta[0] == 1.0);
  CHECK(sim.truth.value(EstimandKind::transportation, Arm::treated) == 1.0);
  CHECK(sim.truth.value(EstimandKind::transportation, Arm::contrast) == 1.0);
  const auto dgp = benchmark_dgp();
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const std::vector<double> v{rng.normal(), rng.normal(), rng.normal()};
    CHECK(dgp->tau(1, v) == 1.5 * v[0] + 1.0);
    CHECK(dgp->tau(0, v) == v[0]);
  }
}

TEST_CASE("simulated records keep ids and offsets") {
  const auto sim = simulate_dgp(20, 4, *benchmark_dgp(), 100);
  std::vector<std::size_t> ids = sim.sample.record_ids();
  std::sort(ids.begin(), ids.end());
  CHECK(ids.front() == 100);
  CHECK(ids.back() == 119);
  CHECK_THROWS_AS(simulate_dgp(5, 1), ArgumentError);
}

TEST_CASE("RMSE study is deterministic and independent of the worker count") {
  RmseStudyConfig c;
  c.n_grid = {100};
  c.alpha_grid = {0.2, 0.5};
  c.reps = 3;
  c.estimators = {Method::plugin, Method::dr, Method::qr};
  const auto a = rmse_study(c);
  c.workers = 4;
  const auto b = rmse_study(c);
  REQUIRE(a.rows.size() == 6);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].rmse == b.rows[i].rmse);
    CHECK(a.rows[i].bias == b.rows[i].bias);
  }
  c.reps = 1;
  CHECK(rmse_study(c).rows[0].rmse == rmse_study(c).rows[0].rmse);
}

TEST_CASE("plug-in RMSE tracks the noise scale") {
  RmseStudyConfig c;
  c.n_grid = {5000};
  c.alpha_grid = {0.5};
  c.reps = 200;
  c.estimators = {Method::plugin};
  const auto t = rmse_study(c);
  const double scale = 2.0 / std::sqrt(5000.0);
  const double r = t.rows[0].rmse;
  CHECK(r > scale / 2.0);
  CHECK(r < scale * 2.0);
}

TEST_CASE("doubly robust beats plug-in at a sub-parametric rate") {
  RmseStudyConfig c;
  c.n_grid = {5000};
  c.alpha_grid = {0.3};
  c.reps = 200;
  const auto t = rmse_study(c);
  CHECK(t.find(Method::dr, 5000, 0.3)->rmse < t.find(Method::plugin, 5000, 0.3)->rmse);
}

TEST_CASE("plug-in RMSE is nonincreasing in alpha") {
  RmseStudyConfig c;
  c.n_grid = {5000};
  c.reps = 1000;
  c.estimators = {Method::plugin};
  const auto t = rmse_study(c);
  int violations = 0;
  for (std::size_t i = 1; i < t.rows.size(); ++i)
    if (t.rows[i].rmse > t.rows[i - 1].rmse) ++violations;
  CHECK(violations <= 1);
}

TEST_CASE("estimator tags") {
  CHECK(parse_estimator_tag("qr") == Method::qr);
  CHECK_THROWS_AS(parse_estimator_tag("tmle"), ArgumentError);
}

TEST_CASE("identification on a single cell") {
  DiscreteLaw law;
  law.v_index_map = {0};
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) law.atoms.push_back({{0.0}, s, a, 0.0, 1.0, 0.25});
  const auto r = identification_oracle(law, 1, EstimandKind::generalization);
  CHECK(r.lhs == 1.0);
  CHECK(r.rhs == 1.0);
  CHECK(r.gap == 0.0);
}

TEST_CASE("identification on a two-point V with shifting covariate laws") {
  const auto law = two_point_law(false);
  for (auto kind : {EstimandKind::generalization, EstimandKind::transportation})
    for (int a = 0; a < 2; ++a) CHECK(identification_oracle(law, a, kind).gap < 1e-14);
}

TEST_CASE("transportability violation opens a gap") {
  const auto r = identification_oracle(two_point_law(true), 1, EstimandKind::transportation);
  CHECK(r.gap > 0.01);
}

TEST_CASE("positivity failure names the cell") {
  auto law = two_point_law(false);
  // Remove every treated source atom at V = 1, W = 1.
  for (auto& at : law.atoms)
    if (at.s == 1 && at.a == 1 && at.x[0] == 1.0 && at.x[1] == 1.0) {
      for (auto& other : law.atoms)
        if (other.s == 1 && other.a == 0 && other.x == at.x) other.prob += at.prob;
      at.prob = 0.0;
    }
  try {
    identification_oracle(law, 1, EstimandKind::generalization);
    FAIL("expected a positivity error");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("positivity") != std::string::npos);
  }
}

TEST_CASE("quadratic comparison grid") {
  QuadraticCompareConfig c;
  c.n_grid = {200};
  c.k_grid = {4, 9};
  c.reps = 5;
  const auto rows = quadratic_compare(c);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].method == Method::dr);
  CHECK(rows[1].method == Method::qr);
  CHECK(rows[3].k == 9);
  for (const auto& r : rows) CHECK(r.rmse * r.rmse == doctest::Approx(r.bias * r.bias + r.var * 4.0 / 5.0).epsilon(1e-9));
  c.workers = 3;
  const auto again = quadratic_compare(c);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].rmse == again[i].rmse);
}

}  // TEST_SUITE
