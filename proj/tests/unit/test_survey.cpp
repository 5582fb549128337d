#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "transport/dr_estimators.hpp"
#include "transport/error.hpp"
#include "transport/simulation.hpp"
#include "transport/survey.hpp"

using namespace transport;

namespace {

SurveyDesign one_stratum(std::size_t n, double w = 1.0) {
  SurveyDesign d;
  for (std::size_t i = 0; i < n; ++i) {
    d.stratum.push_back(1);
    d.cluster.push_back(static_cast<std::int64_t>(i));
    d.weight.push_back(w);
  }
  return d;
}

}  // namespace

TEST_SUITE("survey") {

TEST_CASE("equal weights reduce to the plain mean") {
  const std::vector<double> y{1, 2, 3};
  const auto r = weighted_mean_variance(one_stratum(3), y);
  CHECK(r.mean == 2.0);
  // s^2 / n for singleton clusters
  CHECK(r.variance == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("weighted mean by hand") {
  SurveyDesign d = one_stratum(2);
  d.weight = {1, 3};
  const std::vector<double> y{1, 3};
  CHECK(weighted_mean_variance(d, y).mean == 2.5);
}

TEST_CASE("constant values have zero variance") {
  SurveyDesign d;
  d.stratum = {1, 1, 2, 2, 2};
  d.cluster = {1, 2, 1, 1, 2};
  d.weight = {1, 4, 2, 2.5, 0.3};
  const std::vector<double> y(5, 0.7);
  const auto r = weighted_mean_variance(d, y);
  CHECK(r.mean == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(r.variance < 1e-30);
}

TEST_CASE("plain-mean reduction on random data") {
  Rng rng(3);
  std::vector<double> y(257);
  for (auto& v : y) v = rng.normal(2.0, 3.0);
  const auto r = weighted_mean_variance(one_stratum(y.size(), 1.0), y);
  double m = 0.0;
  for (double v : y) m += v;
  m /= static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - m) * (v - m);
  CHECK(std::abs(r.mean - m) < 1e-12);
  CHECK(r.variance == doctest::Approx(ss / (static_cast<double>(y.size()) - 1.0) / static_cast<double>(y.size())).epsilon(1e-12));
}

TEST_CASE("weight scaling by powers of two is exact, other factors within rounding") {
  Rng rng(4);
  SurveyDesign d;
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    d.stratum.push_back(i % 4);
    d.cluster.push_back(i % 13);
    d.weight.push_back(0.5 + rng.uniform() * 3.0);
    y.push_back(rng.normal());
  }
  const auto base = weighted_mean_variance(d, y);
  for (double c : {2.0, 0.25, 1024.0}) {
    SurveyDesign s = d;
    for (auto& w : s.weight) w *= c;
    const auto r = weighted_mean_variance(s, y);
    CHECK(r.mean == base.mean);
    CHECK(r.variance == base.variance);
  }
  SurveyDesign s = d;
  for (auto& w : s.weight) w *= 3.7;
  const auto r = weighted_mean_variance(s, y);
  CHECK(r.mean == doctest::Approx(base.mean).epsilon(1e-13));
  CHECK(r.variance == doctest::Approx(base.variance).epsilon(1e-12));
}

TEST_CASE("single-cluster strata are flagged and contribute nothing") {
  SurveyDesign d;
  d.stratum = {1, 1, 2, 2};
  d.cluster = {5, 6, 7, 7};
  d.weight = {1, 1, 1, 1};
  const std::vector<double> y{1, 3, 10, 20};
  const auto r = weighted_mean_variance(d, y);
  REQUIRE(r.single_cluster_strata.size() == 1);
  CHECK(r.single_cluster_strata[0] == 2);
  // Stratum 1 alone: 2/(2-1) * ((1-2)^2 + (3-2)^2) / 4^2; its cluster weight totals do not vary.
  CHECK(r.variance == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("combined estimate") {
  const auto e = combine_source_target(0.2, 0.0, 0.4, 0.0, 100, 300);
  CHECK(e.point == 0.35);
  const auto same = combine_source_target(0.6, 0.01, 0.6, 0.02, 50, 50);
  CHECK(same.point == 0.6);
  const auto v = combine_source_target(0.1, 0.04, 0.3, 0.0, 100, 300);
  CHECK(v.se * v.se == doctest::Approx(100.0 * 100.0 * 0.04 / (400.0 * 400.0)));
  CHECK_THROWS_AS(combine_source_target(0.1, 0.0, 0.2, 0.0, 0, 3), DataError);
}

TEST_CASE("equal target weights reproduce the transportation estimate") {
  const auto sim = simulate_dgp(600, 51);
  std::vector<TargetRecord> tgt = sim.sample.target();
  for (std::size_t i = 0; i < tgt.size(); ++i) tgt[i].survey = SurveyInfo{static_cast<std::int64_t>(i % 3), static_cast<std::int64_t>(i), 2.0};
  const CombinedSample s(sim.sample.source(), tgt, sim.sample.v_index_map());
  const auto fit = oracle_noisy_nuisances(s, *benchmark_dgp(), 0.3, 5, NoiseSharing::per_record);
  for (Arm arm : {Arm::treated, Arm::control, Arm::contrast}) {
    const auto sv = survey_transport_estimate(s, fit, arm);
    const auto dr = dr_estimate(s, fit, arm, EstimandKind::transportation);
    CHECK(std::abs(sv.estimate.point - dr.point) < 1e-12);
    CHECK(sv.single_cluster_strata.empty());
  }
}

TEST_CASE("survey estimate without design columns is a config error") {
  const auto sim = simulate_dgp(100, 52);
  const auto fit = oracle_noisy_nuisances(sim.sample, *benchmark_dgp(), 0.3, 5);
  CHECK_THROWS_AS(survey_transport_estimate(sim.sample, fit, Arm::treated), ConfigError);
}

}  // TEST_SUITE
