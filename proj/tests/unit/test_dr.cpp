#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "transport/dgp.hpp"
#include "transport/dr_estimators.hpp"
#include "transport/error.hpp"
#include "transport/simulation.hpp"

using namespace transport;

namespace {

// Constant nuisances everywhere; used for the degenerate efficiency-bound cases.
class FlatDgp final : public Dgp {
 public:
  FlatDgp(double rho, double pi, double mu) : rho_(rho), pi_(pi), mu_(mu) {}
  std::size_t d() const override { return 1; }
  const std::vector<std::size_t>& v_indices() const override { return v_; }
  void draw_x(Rng& rng, std::span<double> x) const override { x[0] = rng.normal(); }
  double rho(std::span<const double>) const override { return rho_; }
  double pi1(std::span<const double>) const override { return pi_; }
  double mu(int, std::span<const double>) const override { return mu_; }
  double outcome_sd(int, std::span<const double>) const override { return 1.0; }
  double tau(int, std::span<const double>) const override { return mu_; }
  double mu_var_given_v(int, std::span<const double>) const override { return 0.0; }
  double treat_prob_given_v(std::span<const double>) const override { return pi_; }
  double psi(int) const override { return mu_; }
  double theta(int) const override { return mu_; }

 private:
  double rho_, pi_, mu_;
  std::vector<std::size_t> v_{0};
};

}  // namespace

TEST_SUITE("dr_estimators") {

TEST_CASE("generalization influence value by hand") {
  const auto s = testing::tiny_sample({0.0}, {1}, {1.0}, {0.3});
  const auto fit = testing::constant_fit(s, 0.5, 0.0, 0.5, 0.5, 0.0, 0.25);
  const auto iv = influence_values(s, fit, 1, EstimandKind::generalization);
  CHECK(iv.values[0] == doctest::Approx(0.5 / 0.25 + 0.25 / 0.5 + 0.25));
}

TEST_CASE("transportation bracket of a target record is its tau") {
  const auto s = testing::tiny_sample({0.0, 1.0}, {1, 0}, {1.0, 2.0}, {0.3});
  auto fit = testing::constant_fit(s, 0.5, 0.0, 0.5, 0.5, 0.0, 0.25);
  fit.tau[1][2] = 0.3;
  const auto iv = influence_values(s, fit, 1, EstimandKind::transportation);
  CHECK(iv.values[2] == 0.3);
  CHECK(iv.normalization == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("residual-free source records reduce to tau") {
  const auto s = testing::tiny_sample({0.0, 1.0}, {1, 1}, {0.7, 0.7}, {0.3});
  const auto fit = testing::constant_fit(s, 0.4, 0.0, 0.7, 0.6, 0.0, 0.7);
  const auto iv = influence_values(s, fit, 1, EstimandKind::generalization);
  for (double v : iv.values) CHECK(v == doctest::Approx(0.7));
  CHECK(dr_estimate(s, fit, Arm::treated, EstimandKind::generalization).point ==
        doctest::Approx(plugin_estimate(s, fit, Arm::treated, EstimandKind::generalization).point));
}

TEST_CASE("plug-in by hand") {
  const auto s = testing::tiny_sample({0.0, 1.0}, {1, 0}, {1.0, 2.0}, {0.1, 0.2, 0.3});
  auto fit = testing::constant_fit(s, 0.5, 0.0, 0.0, 0.5, 0.0, 9.0);
  fit.tau[1][2] = 0.2;
  fit.tau[1][3] = 0.4;
  fit.tau[1][4] = 0.6;
  const auto e = plugin_estimate(s, fit, Arm::treated, EstimandKind::transportation);
  CHECK(e.point == doctest::Approx(0.4));
  CHECK(e.naive_se);
  const auto c = testing::constant_fit(s, 0.5, 0.0, 0.0, 0.5, 0.0, 0.8);
  const auto ec = plugin_estimate(s, c, Arm::treated, EstimandKind::generalization);
  CHECK(ec.point == doctest::Approx(0.8));
  CHECK(ec.se == 0.0);
}

TEST_CASE("generalization plug-in with V = X and tau = mu averages mu over all records") {
  const auto s = testing::tiny_sample({0.0, 1.0, 2.0}, {1, 0, 1}, {1, 2, 3}, {0.5, 1.5});
  auto fit = testing::constant_fit(s, 0.5, 0.0, 0.0, 0.5, 0.0, 0.0);
  for (std::size_t i = 0; i < s.n(); ++i) fit.mu[1][i] = fit.tau[1][i] = 2.0 * s.v(i, 0) + 1.0;
  double mean_mu = 0.0;
  for (double m : fit.mu[1]) mean_mu += m / static_cast<double>(s.n());
  CHECK(plugin_estimate(s, fit, Arm::treated, EstimandKind::generalization).point == doctest::Approx(mean_mu));
}

TEST_CASE("pure-target sample with P(S = 0) = 1 gives the target mean of tau") {
  std::vector<TargetRecord> t{{{0.1}, std::nullopt}, {{0.2}, std::nullopt}, {{0.3}, std::nullopt}};
  const CombinedSample s({}, t, {0});
  auto fit = testing::constant_fit(s, 0.5, 0.0, 0.0, 0.37, 0.0, 0.0);
  fit.tau[1] = {1.0, 2.0, 6.0};
  CHECK(dr_estimate(s, fit, Arm::treated, EstimandKind::transportation).point == doctest::Approx(3.0));
}

TEST_CASE("contrast antisymmetry") {
  const auto sim = simulate_dgp(300, 31);
  const auto fit = oracle_noisy_nuisances(sim.sample, *benchmark_dgp(), 0.2, 4);
  auto src = sim.sample.source();
  for (auto& r : src) r.a = 1 - r.a;
  const CombinedSample swapped(src, sim.sample.target(), sim.sample.v_index_map());
  auto sw = fit;
  std::swap(sw.mu[0], sw.mu[1]);
  std::swap(sw.tau[0], sw.tau[1]);
  for (auto& p : sw.pi1) p = 1.0 - p;
  for (auto kind : {EstimandKind::generalization, EstimandKind::transportation}) {
    const double a = ate_contrast(sim.sample, fit, kind).point;
    const double b = ate_contrast(swapped, sw, kind).point;
    CHECK(a == doctest::Approx(-b).epsilon(1e-12));
  }

  // Arms sharing nuisances, propensity 1/2 and a constant outcome: the contrast vanishes.
  for (std::size_t i = 0; i < src.size(); ++i) {
    src[i].a = static_cast<int>(i % 2);
    src[i].y = 0.3;
  }
  const CombinedSample flat_sample(src, sim.sample.target(), sim.sample.v_index_map());
  const auto flat = testing::constant_fit(flat_sample, 0.5, 0.3, 0.3, 0.5, 0.2, 0.2);
  CHECK(ate_contrast(flat_sample, flat, EstimandKind::transportation).point == doctest::Approx(0.0));
}

TEST_CASE("centering identities") {
  const auto sim = simulate_dgp(500, 32);
  const auto fit = oracle_noisy_nuisances(sim.sample, *benchmark_dgp(), 0.25, 7);
  const auto ge = influence_values(sim.sample, fit, 1, EstimandKind::generalization);
  const auto ge_point = dr_estimate(sim.sample, fit, Arm::treated, EstimandKind::generalization).point;
  double acc = 0.0;
  for (double v : ge.values) acc += v - ge_point;
  CHECK(std::abs(acc / static_cast<double>(sim.sample.n())) < 1e-13);

  const auto tr = influence_values(sim.sample, fit, 1, EstimandKind::transportation);
  const auto tr_point = dr_estimate(sim.sample, fit, Arm::treated, EstimandKind::transportation).point;
  double bracket = 0.0;
  for (double v : tr.values) bracket += v;
  bracket /= static_cast<double>(sim.sample.n());
  CHECK(std::abs(bracket - tr_point * static_cast<double>(sim.sample.n2()) / static_cast<double>(sim.sample.n())) < 1e-13);

  const auto c = centered_influence(sim.sample, fit, 1, EstimandKind::transportation);
  CHECK(std::abs(std::accumulate(c.centered.begin(), c.centered.end(), 0.0)) < 1e-9);
}

TEST_CASE("V = X with tau = mu matches the V = X influence function term by term") {
  const auto dgp = benchmark_dgp(true);
  const auto sim = simulate_dgp(200, 33, *dgp);
  auto fit = oracle_noisy_nuisances(sim.sample, *dgp, 0.3, 2, NoiseSharing::per_record);
  fit.tau = fit.mu;
  const auto iv = influence_values(sim.sample, fit, 1, EstimandKind::generalization);
  for (std::size_t i = 0; i < sim.sample.n(); ++i) {
    double expect = fit.mu[1][i];
    if (sim.sample.is_source(i) && sim.sample.source()[i].a == 1)
      expect += (sim.sample.source()[i].y - fit.mu[1][i]) / (fit.rho[i] * fit.pi1[i]);
    CHECK(iv.values[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("permutation invariance") {
  const auto sim = simulate_dgp(300, 34);
  const auto fit = oracle_noisy_nuisances(sim.sample, *benchmark_dgp(), 0.2, 1, NoiseSharing::per_record);
  std::vector<std::size_t> perm(sim.sample.n());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(1);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  const auto sub = sim.sample.subset(perm);
  // subset() regroups sources first, so align the fit through the record ids.
  auto pf = fit;
  for (std::size_t i = 0; i < sub.n(); ++i) {
    const std::size_t j = sub.record_ids()[i];
    pf.pi1[i] = fit.pi1[j];
    pf.rho[i] = fit.rho[j];
    pf.pa_v[i] = fit.pa_v[j];
    for (int a = 0; a < 2; ++a) {
      pf.mu[a][i] = fit.mu[a][j];
      pf.tau[a][i] = fit.tau[a][j];
    }
  }
  for (auto kind : {EstimandKind::generalization, EstimandKind::transportation}) {
    const auto a = dr_estimate(sim.sample, fit, Arm::contrast, kind);
    const auto b = dr_estimate(sub, pf, Arm::contrast, kind);
    CHECK(a.point == doctest::Approx(b.point).epsilon(1e-12));
    CHECK(a.se == doctest::Approx(b.se).epsilon(1e-10));
  }
}

TEST_CASE("oracle nuisances on the benchmark law recover the transportation effect") {
  const auto dgp = benchmark_dgp();
  const auto sim = simulate_dgp(5000, 35, *dgp);
  const auto fit = oracle_nuisances(sim.sample, *dgp, OracleNoise{}, 0);
  const auto t1 = dr_estimate(sim.sample, fit, Arm::treated, EstimandKind::transportation);
  CHECK(std::abs(t1.point - 1.0) < 2.0 * t1.se);
  const auto c = ate_contrast(sim.sample, fit, EstimandKind::transportation);
  CHECK(std::abs(c.point - 1.0) < 2.0 * c.se);
}

TEST_CASE("missing arm and missing target are data errors") {
  const auto s = testing::tiny_sample({0.0, 1.0}, {1, 1}, {1.0, 2.0}, {0.3});
  const auto fit = testing::constant_fit(s, 0.5, 0.0, 0.5, 0.5, 0.0, 0.25);
  CHECK_THROWS_AS(dr_estimate(s, fit, Arm::control, EstimandKind::generalization), DataError);
  const auto no_target = testing::tiny_sample({0.0, 1.0}, {1, 0}, {1.0, 2.0}, {});
  const auto f2 = testing::constant_fit(no_target, 0.5, 0.0, 0.5, 0.5, 0.0, 0.25);
  CHECK_THROWS_AS(dr_estimate(no_target, f2, Arm::treated, EstimandKind::transportation), DataError);
}

TEST_CASE("unclipped fit is rejected") {
  const auto s = testing::tiny_sample({0.0, 1.0}, {1, 0}, {1.0, 2.0}, {0.3});
  auto fit = testing::constant_fit(s, 0.5, 0.0, 0.5, 0.5, 0.0, 0.25);
  fit.rho[0] = 0.001;
  CHECK_THROWS_AS(dr_estimate(s, fit, Arm::treated, EstimandKind::generalization), NumericalError);
}

TEST_CASE("efficiency bound spot cases") {
  const FlatDgp half(0.5, 0.5, 2.0);
  const auto b = efficiency_bound_mc(half, EstimandKind::generalization, 1, 2000, 1);
  CHECK(b.value == doctest::Approx(4.0).epsilon(1e-12));
  CHECK_FALSE(b.low_precision);
  // Everyone in the source and treated.
  const FlatDgp all(1.0, 1.0, 0.0);
  CHECK(efficiency_bound_mc(all, EstimandKind::generalization, 1, 100, 1).value == doctest::Approx(1.0));
  CHECK(efficiency_bound_mc(all, EstimandKind::generalization, 1, 100, 1).low_precision);
}

TEST_CASE("transportation bound for the benchmark law") {
  const auto b = efficiency_bound_mc(*benchmark_dgp(), EstimandKind::transportation, 1, 200000, 3);
  // rho = 1/2 gives 2 E[1/pi_1] + 2 Var(x4) + 2 Var(1.5 x1), and E[1/pi_1] = 1 + exp(0.09).
  const double closed = 2.0 * (1.0 + std::exp(0.09)) + 2.0 + 4.5;
  CHECK(std::abs(b.value - closed) < 4.0 * b.mc_se);
  CHECK(b.mc_se < 0.02);
}

TEST_CASE("influence dump") {
  const auto s = testing::tiny_sample({0.0, 1.0}, {1, 0}, {1.0, 2.0}, {0.3});
  auto dir = testing::scratch_dir("dr-dump");
  write_influence_csv(dir / "inf.csv", s, std::vector<double>{0.5, 1.5, 2.5});
  CHECK(testing::read_text(dir / "inf.csv").rfind("record_id,value\n0,0.5\n", 0) == 0);
}

}  // TEST_SUITE
