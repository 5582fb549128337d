#pragma once

// Weighted means and linearized variances under stratified cluster sampling,
// and the source/target combination of transportation estimates.

#include <cstdint>
#include <span>
#include <vector>

#include "transport/core_model.hpp"
#include "transport/nuisance.hpp"

namespace transport {

struct SurveyDesign {
  std::vector<std::int64_t> stratum;
  std::vector<std::int64_t> cluster;  // cluster labels are local to their stratum
  std::vector<double> weight;

  std::size_t size() const { return weight.size(); }
  void validate() const;
  // Design of the target records; throws ConfigError when they carry none.
  static SurveyDesign from_targets(const CombinedSample& sample);
};

struct WeightedMean {
  double mean = 0.0;
  double variance = 0.0;
  // Strata with a single sampled cluster; they contribute no variance.
  std::vector<std::int64_t> single_cluster_strata;
};

// ybar_w = sum w y / sum w with Var ~ [Var(Y) + ybar^2 Var(N) - 2 ybar Cov(Y, N)] / N^2,
// the (co)variances of the totals estimated between clusters within strata
// (with-replacement formula).
WeightedMean weighted_mean_variance(const SurveyDesign& design, std::span<const double> values);

// (n1/n) theta1 + (n2/n) theta2 with variance (n1^2 var1 + n2^2 var2) / n^2.
EffectEstimate combine_source_target(double theta1, double var1, double theta2, double var2, std::size_t n1,
                                     std::size_t n2, Arm arm = Arm::treated);

// (n1/n) mean(source_values) + (n2/n) target.mean with variance
// (n1^2 s1^2/n1 + n2^2 target.variance) / n^2.
EffectEstimate combined_transport_estimate(std::span<const double> source_values, const WeightedMean& target,
                                           std::size_t n1, std::size_t n2, Arm arm = Arm::treated);

struct SurveyTransportResult {
  EffectEstimate estimate;
  std::vector<std::int64_t> single_cluster_strata;
};

// Transportation estimate with the target half averaged under the survey
// design of the target records. Contrasts use per-record differences.
SurveyTransportResult survey_transport_estimate(const CombinedSample& sample, const NuisanceFit& fit, Arm arm);

}  // namespace transport
