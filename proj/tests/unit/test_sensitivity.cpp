#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "transport/dr_estimators.hpp"
#include "transport/error.hpp"
#include "transport/sensitivity.hpp"
#include "transport/simulation.hpp"

using namespace transport;

TEST_SUITE("sensitivity") {

TEST_CASE("no violation collapses to the point") {
  const auto b = ate_interval(0.024, 0.0, 0.0, EstimandKind::transportation, 0.5);
  CHECK(b.lower == 0.024);
  CHECK(b.upper == 0.024);
  const auto g = arm_interval(0.3, Arm::treated, 0.0, 0.0, EstimandKind::generalization, 0.4, 0.6);
  CHECK(g.lower == 0.3);
  CHECK(g.upper == 0.3);
}

TEST_CASE("transportation break-even values") {
  const auto d2 = ate_interval(0.024, 0.0, 0.012, EstimandKind::transportation, 0.5);
  CHECK(d2.lower == 0.0);
  CHECK(d2.upper == 0.048);
  const auto d1 = ate_interval(0.024, 0.024, 0.0, EstimandKind::transportation, 0.5);
  CHECK(d1.lower == 0.0);
  CHECK(d1.upper == 0.048);
  CHECK(breakeven_delta(0.024, BreakevenMode::delta2_only, EstimandKind::transportation, 0.5) == 0.012);
  CHECK(breakeven_delta(0.024, BreakevenMode::delta1_only, EstimandKind::transportation, 0.5) == 0.024);
  CHECK(breakeven_delta(0.0, BreakevenMode::delta1_only, EstimandKind::transportation, 0.5) == 0.0);
  CHECK(breakeven_delta(0.0, BreakevenMode::delta2_only, EstimandKind::generalization, 0.5) == 0.0);
}

TEST_CASE("generalization scales delta2 by the target share") {
  const auto b = ate_interval(1.0, 0.1, 0.2, EstimandKind::generalization, 0.25);
  CHECK(b.upper - b.center == doctest::Approx(0.1 + 2 * 0.2 * 0.25));
  CHECK(breakeven_delta(0.3, BreakevenMode::delta2_only, EstimandKind::generalization, 0.25) == doctest::Approx(0.6));
}

TEST_CASE("sign changes exactly at the break-even value") {
  for (auto kind : {EstimandKind::transportation, EstimandKind::generalization}) {
    for (double point : {0.024, -0.7, 3.1}) {
      const double p0 = 0.37;
      const double d1 = breakeven_delta(point, BreakevenMode::delta1_only, kind, p0);
      const double d2 = breakeven_delta(point, BreakevenMode::delta2_only, kind, p0);
      auto excludes_zero = [&](double a, double b) {
        const auto i = ate_interval(point, a, b, kind, p0);
        return i.lower > 0.0 || i.upper < 0.0;
      };
      CHECK(excludes_zero(d1 - 1e-9, 0.0));
      CHECK_FALSE(excludes_zero(d1 + 1e-9, 0.0));
      CHECK(excludes_zero(0.0, d2 - 1e-9));
      CHECK_FALSE(excludes_zero(0.0, d2 + 1e-9));
    }
  }
}

TEST_CASE("nesting and exact linear width on a grid") {
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      const double a = 0.01 * i, b = 0.01 * j;
      const auto in = ate_interval(0.2, a, b, EstimandKind::transportation, 0.5);
      CHECK(in.upper - in.lower == doctest::Approx(2 * (a + 2 * b)).epsilon(1e-14));
      if (i + 1 < 10) {
        const auto out = ate_interval(0.2, a + 0.01, b, EstimandKind::transportation, 0.5);
        CHECK(out.lower <= in.lower);
        CHECK(out.upper >= in.upper);
      }
      if (j + 1 < 10) {
        const auto out = ate_interval(0.2, a, b + 0.01, EstimandKind::transportation, 0.5);
        CHECK(out.lower <= in.lower);
        CHECK(out.upper >= in.upper);
      }
    }
}

TEST_CASE("break-even curve") {
  const auto c = breakeven_curve(0.024, EstimandKind::transportation, 0.5);
  REQUIRE(c.size() == 101);
  CHECK(c.front().delta1 == 0.0);
  CHECK(c.front().delta2 == 0.012);
  CHECK(c.back().delta1 == 0.024);
  CHECK(c.back().delta2 == 0.0);
  for (const auto& p : c) CHECK(std::abs(p.lower) < 1e-15);
}

TEST_CASE("bad deltas") {
  CHECK_THROWS_AS(ate_interval(0.1, -0.1, 0.0, EstimandKind::transportation, 0.5), ArgumentError);
  CHECK_THROWS_AS(ate_interval(0.1, 0.0, NAN, EstimandKind::transportation, 0.5), ArgumentError);
}

TEST_CASE("intervals from data are centred on the doubly robust estimate") {
  const auto sim = simulate_dgp(400, 41);
  auto fit = oracle_noisy_nuisances(sim.sample, *benchmark_dgp(), 0.3, 2);
  const auto dr = ate_contrast(sim.sample, fit, EstimandKind::transportation);
  const auto b = sensitivity_interval(sim.sample, fit, 0.1, 0.05, {EstimandKind::transportation, Arm::contrast});
  CHECK(b.center == dr.point);
  CHECK(b.upper - b.center == doctest::Approx(0.2));

  const auto arm = sensitivity_interval(sim.sample, fit, 0.1, 0.0, {EstimandKind::transportation, Arm::treated});
  double p0 = 0.0;
  for (std::size_t i = sim.sample.n1(); i < sim.sample.n(); ++i) p0 += 1.0 - fit.pa_v[i];
  p0 /= static_cast<double>(sim.sample.n2());
  CHECK(arm.upper - arm.center == doctest::Approx(0.1 * p0));

  fit.pa_v.clear();
  CHECK_THROWS_AS(sensitivity_interval(sim.sample, fit, 0.1, 0.0, {EstimandKind::transportation, Arm::treated}), ConfigError);
}

}  // TEST_SUITE
