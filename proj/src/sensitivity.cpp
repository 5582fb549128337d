#include "transport/sensitivity.hpp"

#include <cmath>
#include <limits>

#include "transport/dr_estimators.hpp"
#include "transport/error.hpp"

namespace transport {
namespace {

void check_deltas(double delta1, double delta2) {
  if (!(delta1 >= 0.0) || !(delta2 >= 0.0) || !std::isfinite(delta1) || !std::isfinite(delta2))
    throw ArgumentError("sensitivity parameters delta1 and delta2 must be finite and nonnegative");
}

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError(std::string(what) + " must lie in [0, 1]");
}

SensitivityBound make_bound(double point, double half_width, double delta1, double delta2, EstimandSpec spec) {
  if (!std::isfinite(point)) throw NumericalError("sensitivity bounds need a finite point estimate");
  return {delta1, delta2, point, point - half_width, point + half_width, spec};
}

}  // namespace

SensitivityBound ate_interval(double point, double delta1, double delta2, EstimandKind kind, double p_target) {
  check_deltas(delta1, delta2);
  check_probability(p_target, "P(S = 0)");
  const double half = kind == EstimandKind::transportation ? delta1 + 2.0 * delta2 : delta1 + 2.0 * delta2 * p_target;
  return make_bound(point, half, delta1, delta2, {kind, Arm::contrast});
}

SensitivityBound arm_interval(double point, Arm arm, double delta1, double delta2, EstimandKind kind,
                              double p_target, double p_other_arm) {
  if (arm == Arm::contrast) return ate_interval(point, delta1, delta2, kind, p_target);
  check_deltas(delta1, delta2);
  check_probability(p_target, "P(S = 0)");
  check_probability(p_other_arm, "P(A = 1 - a | V, S = 1)");
  const double half = delta1 * p_other_arm + (kind == EstimandKind::transportation ? delta2 : delta2 * p_target);
  return make_bound(point, half, delta1, delta2, {kind, arm});
}

SensitivityBound sensitivity_interval(const CombinedSample& sample, const NuisanceFit& fit, double delta1,
                                      double delta2, EstimandSpec spec) {
  check_deltas(delta1, delta2);
  const double p_target = static_cast<double>(sample.n2()) / static_cast<double>(sample.n());
  const EffectEstimate est = dr_estimate(sample, fit, spec.arm, spec.kind);
  if (spec.arm == Arm::contrast) return ate_interval(est.point, delta1, delta2, spec.kind, p_target);

  if (fit.pa_v.size() != sample.n())
    throw ConfigError("single-arm sensitivity bounds need a fitted P(A = 1 | V, S = 1) learner");
  const int other = 1 - arm_value(spec.arm);
  const std::size_t first = spec.kind == EstimandKind::transportation ? sample.n1() : 0;
  double acc = 0.0;
  for (std::size_t i = first; i < sample.n(); ++i) acc += other == 1 ? fit.pa_v[i] : 1.0 - fit.pa_v[i];
  const double p_other = acc / static_cast<double>(sample.n() - first);
  return arm_interval(est.point, spec.arm, delta1, delta2, spec.kind, p_target, p_other);
}

double breakeven_delta(double point, BreakevenMode mode, EstimandKind kind, double p_target) {
  if (!std::isfinite(point)) throw NumericalError("break-even analysis needs a finite point estimate");
  check_probability(p_target, "P(S = 0)");
  const double magnitude = std::fabs(point);
  if (mode == BreakevenMode::delta1_only) return magnitude;
  if (kind == EstimandKind::transportation) return magnitude / 2.0;
  if (magnitude == 0.0) return 0.0;
  if (p_target == 0.0) return std::numeric_limits<double>::infinity();
  return magnitude / (2.0 * p_target);
}

std::vector<CurvePoint> breakeven_curve(double point, EstimandKind kind, double p_target, int points) {
  if (points < 2) throw ArgumentError("break-even curve needs at least 2 grid points");
  const double magnitude = std::fabs(point);
  const double d2_max = breakeven_delta(point, BreakevenMode::delta2_only, kind, p_target);
  std::vector<CurvePoint> out;
  out.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double delta1 = magnitude * static_cast<double>(i) / static_cast<double>(points - 1);
    // delta2 along the line, written so that both endpoints are exact.
    const double delta2 = i == points - 1 ? 0.0 : d2_max * static_cast<double>(points - 1 - i) / static_cast<double>(points - 1);
    const SensitivityBound b = ate_interval(point, delta1, delta2, kind, p_target);
    out.push_back({delta1, delta2, b.lower, b.upper});
  }
  return out;
}

}  // namespace transport
