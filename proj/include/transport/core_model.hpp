#pragma once

// Domain types shared by every estimator: the combined source/target sample,
// fold assignments, estimand selectors and the reported effect estimate.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace transport {

// Two-sided 97.5% standard normal quantile; all intervals are 95%.
inline constexpr double kNormalQuantile975 = 1.959963984540054;
inline constexpr double kDefaultClipEps = 0.01;
inline constexpr int kDefaultFolds = 5;

enum class EstimandKind { generalization, transportation };
enum class Arm { control = 0, treated = 1, contrast = 2 };
enum class Method { plugin, dr, qr };

struct EstimandSpec {
  EstimandKind kind = EstimandKind::transportation;
  Arm arm = Arm::contrast;

  friend bool operator==(const EstimandSpec&, const EstimandSpec&) = default;
};

std::string_view to_string(EstimandKind kind);
std::string_view to_string(Arm arm);
std::string_view to_string(Method method);
EstimandKind parse_kind(std::string_view text);  // "ge"/"tr" or the long names
Arm parse_arm(std::string_view text);            // "0", "1", "contrast", long names
Method parse_method(std::string_view text);

// Treatment value of an arm; contrast has none.
int arm_value(Arm arm);

struct SourceRecord {
  std::vector<double> x;
  int a = 0;
  double y = 0.0;
};

struct SurveyInfo {
  std::int64_t stratum = 0;
  std::int64_t cluster = 0;
  double weight = 1.0;

  friend bool operator==(const SurveyInfo&, const SurveyInfo&) = default;
};

struct TargetRecord {
  std::vector<double> v;
  std::optional<SurveyInfo> survey;
};

// Source records occupy combined indices [0, n1), target records [n1, n).
class CombinedSample {
 public:
  CombinedSample() = default;
  // Validates every record; throws DataError/SchemaError on violations.
  CombinedSample(std::vector<SourceRecord> source, std::vector<TargetRecord> target,
                 std::vector<std::size_t> v_index_map, std::vector<std::size_t> record_ids = {});

  std::size_t n() const { return source_.size() + target_.size(); }
  std::size_t n1() const { return source_.size(); }
  std::size_t n2() const { return target_.size(); }
  std::size_t d() const { return d_; }
  std::size_t dv() const { return v_index_map_.size(); }

  const std::vector<SourceRecord>& source() const { return source_; }
  const std::vector<TargetRecord>& target() const { return target_; }
  const std::vector<std::size_t>& v_index_map() const { return v_index_map_; }
  // Stable identifiers that survive subsetting (default 0..n-1).
  const std::vector<std::size_t>& record_ids() const { return record_ids_; }

  bool is_source(std::size_t i) const { return i < source_.size(); }
  bool v_equals_x() const;
  bool has_survey() const;

  // V coordinate j of combined record i.
  double v(std::size_t i, std::size_t j) const;
  std::vector<double> v_row(std::size_t i) const;
  // Full covariate row; only defined for source records, or any record when V = X.
  std::vector<double> x_row(std::size_t i) const;

  Eigen::MatrixXd v_matrix() const;         // n x dv
  Eigen::MatrixXd source_x_matrix() const;  // n1 x d
  // X for every record; requires V = X.
  Eigen::MatrixXd full_x_matrix() const;

  // Records at the given combined indices, keeping the source-first order.
  CombinedSample subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<SourceRecord> source_;
  std::vector<TargetRecord> target_;
  std::vector<std::size_t> v_index_map_;
  std::vector<std::size_t> record_ids_;
  std::size_t d_ = 0;
};

struct FoldAssignment {
  std::vector<int> fold;  // one entry per combined record
  int k = 0;

  std::vector<std::size_t> members(int f) const;
  std::size_t size(int f) const;
};

// Balanced random partition of [0, n) into k_folds folds, deterministic in (n, k, seed).
FoldAssignment split_folds(std::size_t n, int k_folds, std::uint64_t seed);

// Clamp each value into [eps, 1 - eps].
std::vector<double> clip_probabilities(std::span<const double> values, double eps);
double clip_probability(double value, double eps);
void validate_clip_eps(double eps);

struct EffectEstimate {
  double point = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::size_t n_used = 0;
  EstimandSpec spec;
  Method method = Method::dr;
  // Plug-in standard errors are not efficient and only reported for reference.
  bool naive_se = false;
};

EffectEstimate make_estimate(double point, double se, std::size_t n_used, EstimandSpec spec,
                             Method method, bool naive_se = false);

std::string estimate_to_json(const EffectEstimate& estimate);
EffectEstimate estimate_from_json(std::string_view text);

// ---------------------------------------------------------------------------
// CSV ingestion

struct Schema {
  std::string treatment = "A";
  std::string outcome = "Y";
  std::vector<std::string> x_columns;
  std::vector<std::string> v_columns;
  std::optional<std::string> stratum;
  std::optional<std::string> cluster;
  std::optional<std::string> weight;
};

struct RejectedRow {
  std::string file;
  std::size_t row = 0;  // 1-based data row (header excluded)
  std::string reason;
};

struct LoadResult {
  CombinedSample sample;
  std::vector<RejectedRow> rejected;
};

// Rows with a missing required field are dropped and listed in `rejected`.
LoadResult load_combined_csv(const std::filesystem::path& source_path,
                             const std::filesystem::path& target_path, const Schema& schema);

void write_combined_csv(const CombinedSample& sample, const Schema& schema,
                        const std::filesystem::path& source_path,
                        const std::filesystem::path& target_path);

// Shortest text that reads back to the same double.
std::string format_double(double v);

// Schema positions of V columns within X columns; throws SchemaError.
std::vector<std::size_t> resolve_v_index_map(const Schema& schema);

}  // namespace transport
