#include "transport/survey.hpp"

#include <cmath>
#include <map>

#include "transport/dr_estimators.hpp"
#include "transport/error.hpp"

namespace transport {

void SurveyDesign::validate() const {
  if (stratum.size() != weight.size() || cluster.size() != weight.size())
    throw ArgumentError("survey design columns differ in length");
  if (weight.empty()) throw DataError("survey design has no records");
  for (std::size_t i = 0; i < weight.size(); ++i)
    if (!(weight[i] > 0.0) || !std::isfinite(weight[i]))
      throw DataError("survey weight of target record " + std::to_string(i) + " is not positive");
}

SurveyDesign SurveyDesign::from_targets(const CombinedSample& sample) {
  SurveyDesign d;
  for (std::size_t i = 0; i < sample.n2(); ++i) {
    const auto& s = sample.target()[i].survey;
    if (!s) throw ConfigError("target record " + std::to_string(i) + " has no survey design fields");
    d.stratum.push_back(s->stratum);
    d.cluster.push_back(s->cluster);
    d.weight.push_back(s->weight);
  }
  return d;
}

WeightedMean weighted_mean_variance(const SurveyDesign& design, std::span<const double> values) {
  design.validate();
  if (values.size() != design.size()) throw ArgumentError("values and survey design differ in length");

  double y_total = 0.0, n_total = 0.0;
  // Cluster totals of w*y and w, grouped by stratum.
  std::map<std::int64_t, std::map<std::int64_t, std::pair<double, double>>> totals;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw DataError("non-finite value at target record " + std::to_string(i));
    const double w = design.weight[i];
    y_total += w * values[i];
    n_total += w;
    auto& t = totals[design.stratum[i]][design.cluster[i]];
    t.first += w * values[i];
    t.second += w;
  }

  WeightedMean out;
  out.mean = y_total / n_total;
  double var_y = 0.0, var_n = 0.0, cov = 0.0;
  for (const auto& [h, clusters] : totals) {
    const auto a = static_cast<double>(clusters.size());
    if (clusters.size() < 2) {
      out.single_cluster_strata.push_back(h);
      continue;
    }
    double mean_y = 0.0, mean_n = 0.0;
    for (const auto& [c, t] : clusters) {
      mean_y += t.first;
      mean_n += t.second;
    }
    mean_y /= a;
    mean_n /= a;
    double sy = 0.0, sn = 0.0, syn = 0.0;
    for (const auto& [c, t] : clusters) {
      const double dy = t.first - mean_y;
      const double dn = t.second - mean_n;
      sy += dy * dy;
      sn += dn * dn;
      syn += dy * dn;
    }
    const double f = a / (a - 1.0);
    var_y += f * sy;
    var_n += f * sn;
    cov += f * syn;
  }
  const double ybar = out.mean;
  out.variance = std::max(0.0, (var_y + ybar * ybar * var_n - 2.0 * ybar * cov) / (n_total * n_total));
  return out;
}

EffectEstimate combine_source_target(double theta1, double var1, double theta2, double var2, std::size_t n1,
                                     std::size_t n2, Arm arm) {
  if (n1 == 0 || n2 == 0) throw DataError("combining source and target estimates needs n1 > 0 and n2 > 0");
  // Count-weighted totals divided once; avoids rounding n1/n and n2/n separately.
  const double n = static_cast<double>(n1 + n2);
  const double c1 = static_cast<double>(n1);
  const double c2 = static_cast<double>(n2);
  const double point = (c1 * theta1 + c2 * theta2) / n;
  const double variance = (c1 * c1 * var1 + c2 * c2 * var2) / (n * n);
  return make_estimate(point, std::sqrt(variance), n1 + n2, {EstimandKind::transportation, arm}, Method::dr);
}

EffectEstimate combined_transport_estimate(std::span<const double> source_values, const WeightedMean& target,
                                           std::size_t n1, std::size_t n2, Arm arm) {
  if (n1 == 0 || n2 == 0) throw DataError("combining source and target estimates needs n1 > 0 and n2 > 0");
  if (source_values.size() != n1) throw ArgumentError("source values do not match n1");
  double theta1 = 0.0;
  for (double v : source_values) theta1 += v;
  theta1 /= static_cast<double>(n1);
  double var1 = 0.0;
  if (n1 > 1) {
    double ss = 0.0;
    for (double v : source_values) ss += (v - theta1) * (v - theta1);
    var1 = ss / static_cast<double>(n1 - 1) / static_cast<double>(n1);
  }
  return combine_source_target(theta1, var1, target.mean, target.variance, n1, n2, arm);
}

SurveyTransportResult survey_transport_estimate(const CombinedSample& sample, const NuisanceFit& fit, Arm arm) {
  const SurveyDesign design = SurveyDesign::from_targets(sample);
  auto normalized = [&](int a) {
    const InfluenceValues iv = influence_values(sample, fit, a, EstimandKind::transportation);
    std::vector<double> v = iv.values;
    for (double& x : v) x /= iv.normalization;
    return v;
  };
  std::vector<double> values;
  if (arm == Arm::contrast) {
    values = normalized(1);
    const std::vector<double> control = normalized(0);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= control[i];
  } else {
    values = normalized(arm_value(arm));
  }
  const std::span<const double> all(values);
  const WeightedMean target = weighted_mean_variance(design, all.subspan(sample.n1()));
  SurveyTransportResult out{combined_transport_estimate(all.subspan(0, sample.n1()), target, sample.n1(), sample.n2(), arm),
                            target.single_cluster_strata};
  return out;
}

}  // namespace transport
