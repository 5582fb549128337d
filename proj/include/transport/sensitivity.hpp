#pragma once

// Bounds on the generalization/transportation functionals when exchangeability
// is relaxed by delta1 and transportability by delta2, and break-even analysis.

#include <vector>

#include "transport/core_model.hpp"
#include "transport/nuisance.hpp"

namespace transport {

struct SensitivityBound {
  double delta1 = 0.0;
  double delta2 = 0.0;
  double center = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  EstimandSpec spec;
};

// ATE contrast: half-width delta1 + 2 delta2 (transportation) or
// delta1 + 2 delta2 P(S = 0) (generalization).
SensitivityBound ate_interval(double point, double delta1, double delta2, EstimandKind kind, double p_target);

// Single arm: half-width delta1 * p_other_arm + delta2 * P(S = 0) (generalization)
// or delta1 * p_other_arm + delta2 (transportation), where p_other_arm is the
// mean of P(A = 1 - a | V, S = 1) over the relevant population.
SensitivityBound arm_interval(double point, Arm arm, double delta1, double delta2, EstimandKind kind,
                              double p_target, double p_other_arm);

// Centered at the doubly robust estimate. Single-arm bounds need fit.pa_v.
SensitivityBound sensitivity_interval(const CombinedSample& sample, const NuisanceFit& fit, double delta1,
                                      double delta2, EstimandSpec spec);

enum class BreakevenMode { delta1_only, delta2_only };

// Smallest delta (the other held at 0) whose ATE interval reaches zero.
double breakeven_delta(double point, BreakevenMode mode, EstimandKind kind, double p_target);

struct CurvePoint {
  double delta1 = 0.0;
  double delta2 = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// The break-even line delta1 + 2 delta2 (P(S = 0)) = |point| sampled at
// `points` equally spaced delta1 values in [0, |point|].
std::vector<CurvePoint> breakeven_curve(double point, EstimandKind kind, double p_target, int points = 101);

}  // namespace transport
