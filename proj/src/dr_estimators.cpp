#include "transport/dr_estimators.hpp"

#include <cmath>
#include <fstream>

#include "transport/error.hpp"
#include "transport/kernels.hpp"
#include "transport/rng.hpp"

namespace transport {
namespace {

// A sample without source records has no arm-specific terms at all.
void require_arm_present(const CombinedSample& sample, int arm) {
  if (sample.n1() == 0) return;
  for (const auto& r : sample.source())
    if (r.a == arm) return;
  throw DataError("no source record received treatment " + std::to_string(arm) + "; the arm is not estimable");
}

void require_target(const CombinedSample& sample, EstimandKind kind) {
  if (kind == EstimandKind::transportation && sample.n2() == 0)
    throw DataError("transportation estimates need at least one target record");
}

void require_fit_size(const CombinedSample& sample, const NuisanceFit& fit) {
  if (fit.size() != sample.n() || fit.tau[0].size() != sample.n() || fit.tau[1].size() != sample.n() ||
      fit.pi1.size() != sample.n() || fit.mu[0].size() != sample.n() || fit.mu[1].size() != sample.n())
    throw ArgumentError("nuisance fit does not match the sample size");
}

double mean(std::span<const double> x) { return kernels::sum(x) / static_cast<double>(x.size()); }

}  // namespace

InfluenceValues influence_values(const CombinedSample& sample, const NuisanceFit& fit, int arm, EstimandKind kind) {
  if (arm != 0 && arm != 1) throw ArgumentError("influence values need arm 0 or 1");
  require_fit_size(sample, fit);
  require_arm_present(sample, arm);
  require_target(sample, kind);

  const std::size_t n = sample.n();
  std::vector<double> source(n), match(n), y(n), mu(n), tau(n), rho(n), pi(n);
  for (std::size_t i = 0; i < n; ++i) {
    rho[i] = fit.rho[i];
    tau[i] = fit.tau[arm][i];
    if (!(rho[i] >= fit.eps && rho[i] <= 1.0 - fit.eps) || !std::isfinite(tau[i]))
      throw NumericalError("internal invariant violated: unclipped participation probability or non-finite nested regression at record " +
                           std::to_string(i));
    if (sample.is_source(i)) {
      const auto& r = sample.source()[i];
      source[i] = 1.0;
      match[i] = r.a == arm ? 1.0 : 0.0;
      y[i] = r.y;
      mu[i] = fit.mu[arm][i];
      pi[i] = fit.pi(arm, i);
      if (!(pi[i] >= fit.eps && pi[i] <= 1.0 - fit.eps) || !std::isfinite(mu[i]))
        throw NumericalError("internal invariant violated: unclipped propensity or non-finite outcome regression at record " +
                             std::to_string(i));
    } else {
      // Placeholders; the indicators zero these terms.
      y[i] = 0.0;
      mu[i] = 0.0;
      pi[i] = 1.0;
    }
  }

  InfluenceValues out;
  out.values.resize(n);
  out.spec = {kind, arm == 1 ? Arm::treated : Arm::control};
  const kernels::InfluenceInputs in{source, match, y, mu, tau, rho, pi};
  if (kind == EstimandKind::generalization) {
    kernels::influence_generalization(in, out.values);
    out.normalization = 1.0;
  } else {
    kernels::influence_transportation(in, out.values);
    out.normalization = static_cast<double>(sample.n2()) / static_cast<double>(n);
  }
  return out;
}

CenteredInfluence centered_influence(const CombinedSample& sample, const NuisanceFit& fit, int arm, EstimandKind kind) {
  const InfluenceValues iv = influence_values(sample, fit, arm, kind);
  CenteredInfluence out;
  const std::size_t n = iv.values.size();
  out.point = mean(iv.values) / iv.normalization;
  out.centered.resize(n);
  if (kind == EstimandKind::generalization) {
    for (std::size_t i = 0; i < n; ++i) out.centered[i] = iv.values[i] - out.point;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double target = sample.is_source(i) ? 0.0 : 1.0;
      out.centered[i] = (iv.values[i] - out.point * target) / iv.normalization;
    }
  }
  return out;
}

double influence_se(std::span<const double> centered) {
  const std::size_t n = centered.size();
  if (n < 2) return 0.0;
  const double c = mean(centered);
  const double var = kernels::sum_squared_deviation(centered, c) / static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

EffectEstimate plugin_estimate(const CombinedSample& sample, const NuisanceFit& fit, Arm arm, EstimandKind kind) {
  require_fit_size(sample, fit);
  require_target(sample, kind);
  if (arm == Arm::contrast) {
    require_arm_present(sample, 0);
    require_arm_present(sample, 1);
  } else {
    require_arm_present(sample, arm_value(arm));
  }
  const std::size_t first = kind == EstimandKind::generalization ? 0 : sample.n1();
  std::vector<double> vals;
  vals.reserve(sample.n() - first);
  for (std::size_t i = first; i < sample.n(); ++i) {
    const double v = arm == Arm::contrast ? fit.tau[1][i] - fit.tau[0][i] : fit.tau[arm_value(arm)][i];
    if (!std::isfinite(v)) throw NumericalError("nested regression is not finite at record " + std::to_string(i));
    vals.push_back(v);
  }
  const double point = mean(vals);
  double se = 0.0;
  if (vals.size() > 1)
    se = std::sqrt(kernels::sum_squared_deviation(vals, point) / static_cast<double>(vals.size() - 1) /
                   static_cast<double>(vals.size()));
  return make_estimate(point, se, vals.size(), {kind, arm}, Method::plugin, true);
}

EffectEstimate dr_estimate(const CombinedSample& sample, const NuisanceFit& fit, Arm arm, EstimandKind kind) {
  if (arm == Arm::contrast) return ate_contrast(sample, fit, kind);
  const CenteredInfluence ci = centered_influence(sample, fit, arm_value(arm), kind);
  return make_estimate(ci.point, influence_se(ci.centered), sample.n(), {kind, arm}, Method::dr);
}

EffectEstimate ate_contrast(const CombinedSample& sample, const NuisanceFit& fit, EstimandKind kind) {
  const CenteredInfluence treated = centered_influence(sample, fit, 1, kind);
  const CenteredInfluence control = centered_influence(sample, fit, 0, kind);
  std::vector<double> diff(treated.centered.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = treated.centered[i] - control.centered[i];
  return make_estimate(treated.point - control.point, influence_se(diff), sample.n(), {kind, Arm::contrast}, Method::dr);
}

EfficiencyBound efficiency_bound_mc(const Dgp& dgp, EstimandKind kind, int arm, std::size_t n_mc, std::uint64_t seed) {
  if (arm != 0 && arm != 1) throw ArgumentError("efficiency bound needs arm 0 or 1");
  if (n_mc < 2) throw ArgumentError("efficiency bound needs at least 2 Monte Carlo draws");
  Rng rng(seed);
  std::vector<double> x(dgp.d());
  // Per draw: outcome-noise term, nested-variance term, tau and the target weight 1 - rho.
  std::vector<double> noise_term(n_mc), nested_term(n_mc), tau(n_mc), w(n_mc);
  for (std::size_t i = 0; i < n_mc; ++i) {
    dgp.draw_x(rng, x);
    const auto v = dgp.v_of(x);
    const double rho = dgp.rho(v);
    const double p1 = dgp.pi1(x);
    const double pi = arm == 1 ? p1 : 1.0 - p1;
    const double sd = dgp.outcome_sd(arm, x);
    const double scale = kind == EstimandKind::generalization ? 1.0 : (1.0 - rho) * (1.0 - rho);
    // P(S = 1 | X) = rho(V): participation depends on V only.
    noise_term[i] = scale * rho * sd * sd / (rho * rho * pi);
    nested_term[i] = scale * dgp.mu_var_given_v(arm, v) / rho;
    tau[i] = dgp.tau(arm, v);
    w[i] = 1.0 - rho;
  }

  const double n = static_cast<double>(n_mc);
  std::vector<double> h(n_mc);
  double value = 0.0;
  double factor = 1.0;
  if (kind == EstimandKind::generalization) {
    const double tau_bar = mean(tau);
    for (std::size_t i = 0; i < n_mc; ++i) h[i] = noise_term[i] + nested_term[i] + (tau[i] - tau_bar) * (tau[i] - tau_bar);
    value = mean(h);
  } else {
    const double p0 = mean(w);
    if (!(p0 > 0.0)) throw ArgumentError("efficiency bound for transportation needs P(S = 0) > 0");
    double tau_bar = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) tau_bar += w[i] * tau[i];
    tau_bar /= p0 * n;
    // P(S = 0) Var(tau | S = 0) = E[(1 - rho)(tau - E[tau | S = 0])^2]
    for (std::size_t i = 0; i < n_mc; ++i)
      h[i] = noise_term[i] + nested_term[i] + w[i] * (tau[i] - tau_bar) * (tau[i] - tau_bar);
    factor = 1.0 / (p0 * p0);
    value = mean(h) * factor;
  }
  EfficiencyBound out;
  out.value = value;
  out.mc_se = factor * std::sqrt(kernels::sum_squared_deviation(h, mean(h)) / (n - 1.0) / n);
  out.n_mc = n_mc;
  out.low_precision = n_mc < 1000;
  return out;
}

void write_influence_csv(const std::filesystem::path& path, const CombinedSample& sample, std::span<const double> values) {
  if (values.size() != sample.n()) throw ArgumentError("influence values do not match the sample size");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "record_id,value\n";
  for (std::size_t i = 0; i < values.size(); ++i) out << sample.record_ids()[i] << ',' << values[i] << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace transport
