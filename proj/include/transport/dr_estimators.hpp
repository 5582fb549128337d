#pragma once

// Plug-in and doubly robust estimators of the generalization (psi_a) and
// transportation (theta_a) functionals, their influence values, and a Monte
// Carlo evaluator of the nonparametric efficiency bound.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "transport/core_model.hpp"
#include "transport/dgp.hpp"
#include "transport/nuisance.hpp"

namespace transport {

// Uncentered influence values. For transportation these are the bracketed
// terms; the estimator divides by `normalization` = P_n(S = 0).
struct InfluenceValues {
  std::vector<double> values;
  EstimandSpec spec;
  double normalization = 1.0;
};

InfluenceValues influence_values(const CombinedSample& sample, const NuisanceFit& fit, int arm, EstimandKind kind);

// Point estimate and per-record centered influence values (mean exactly zero
// up to rounding). Used for standard errors and for contrasts.
struct CenteredInfluence {
  double point = 0.0;
  std::vector<double> centered;
};

CenteredInfluence centered_influence(const CombinedSample& sample, const NuisanceFit& fit, int arm, EstimandKind kind);

EffectEstimate plugin_estimate(const CombinedSample& sample, const NuisanceFit& fit, Arm arm, EstimandKind kind);
// Arm::contrast forwards to ate_contrast.
EffectEstimate dr_estimate(const CombinedSample& sample, const NuisanceFit& fit, Arm arm, EstimandKind kind);
EffectEstimate ate_contrast(const CombinedSample& sample, const NuisanceFit& fit, EstimandKind kind);

// Empirical standard deviation of `centered` divided by sqrt(n).
double influence_se(std::span<const double> centered);

struct EfficiencyBound {
  double value = 0.0;
  double mc_se = 0.0;
  std::size_t n_mc = 0;
  // Fewer than 1000 draws: the Monte Carlo error is large.
  bool low_precision = false;
};

EfficiencyBound efficiency_bound_mc(const Dgp& dgp, EstimandKind kind, int arm, std::size_t n_mc, std::uint64_t seed);

// Diagnostic dump: one `record_id,value` line per record.
void write_influence_csv(const std::filesystem::path& path, const CombinedSample& sample, std::span<const double> values);

}  // namespace transport
