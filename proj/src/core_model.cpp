#include "transport/core_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "transport/config.hpp"
#include "transport/error.hpp"
#include "transport/rng.hpp"

namespace transport {

std::string_view to_string(EstimandKind kind) {
  return kind == EstimandKind::generalization ? "generalization" : "transportation";
}

std::string_view to_string(Arm arm) {
  switch (arm) {
    case Arm::control: return "control";
    case Arm::treated: return "treated";
    case Arm::contrast: return "contrast";
  }
  return "contrast";
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::plugin: return "plugin";
    case Method::dr: return "dr";
    case Method::qr: return "qr";
  }
  return "dr";
}

EstimandKind parse_kind(std::string_view text) {
  if (text == "ge" || text == "generalization") return EstimandKind::generalization;
  if (text == "tr" || text == "transportation") return EstimandKind::transportation;
  throw ArgumentError("unknown estimand kind '" + std::string(text) + "' (expected ge or tr)");
}

Arm parse_arm(std::string_view text) {
  if (text == "0" || text == "control") return Arm::control;
  if (text == "1" || text == "treated") return Arm::treated;
  if (text == "contrast") return Arm::contrast;
  throw ArgumentError("unknown arm '" + std::string(text) + "' (expected 0, 1 or contrast)");
}

Method parse_method(std::string_view text) {
  if (text == "plugin") return Method::plugin;
  if (text == "dr") return Method::dr;
  if (text == "qr") return Method::qr;
  throw ArgumentError("unknown estimator '" + std::string(text) + "' (expected plugin, dr or qr)");
}

int arm_value(Arm arm) {
  if (arm == Arm::contrast) throw ArgumentError("the contrast arm has no single treatment value");
  return static_cast<int>(arm);
}

// ---------------------------------------------------------------------------
// CombinedSample

CombinedSample::CombinedSample(std::vector<SourceRecord> source, std::vector<TargetRecord> target,
                               std::vector<std::size_t> v_index_map,
                               std::vector<std::size_t> record_ids)
    : source_(std::move(source)),
      target_(std::move(target)),
      v_index_map_(std::move(v_index_map)),
      record_ids_(std::move(record_ids)) {
  if (source_.empty() && target_.empty()) throw DataError("combined sample has no records");
  if (v_index_map_.empty()) throw SchemaError("V must contain at least one covariate");

  if (!source_.empty()) {
    d_ = source_.front().x.size();
  } else {
    d_ = *std::max_element(v_index_map_.begin(), v_index_map_.end()) + 1;
  }
  if (d_ == 0) throw DataError("source covariate vector X is empty");

  std::vector<std::size_t> sorted = v_index_map_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw SchemaError("V index map contains duplicate columns");
  if (sorted.back() >= d_) throw SchemaError("V index map refers to a column outside X");

  for (std::size_t i = 0; i < source_.size(); ++i) {
    const auto& r = source_[i];
    if (r.x.size() != d_)
      throw DataError("source record " + std::to_string(i) + " has " + std::to_string(r.x.size()) +
                      " covariates, expected " + std::to_string(d_));
    if (r.a != 0 && r.a != 1)
      throw DataError("source record " + std::to_string(i) + " has non-binary treatment " +
                      std::to_string(r.a));
    if (!std::isfinite(r.y) ||
        !std::all_of(r.x.begin(), r.x.end(), [](double v) { return std::isfinite(v); }))
      throw DataError("source record " + std::to_string(i) + " has a non-finite value");
  }
  for (std::size_t i = 0; i < target_.size(); ++i) {
    const auto& r = target_[i];
    if (r.v.size() != v_index_map_.size())
      throw DataError("target record " + std::to_string(i) + " has " + std::to_string(r.v.size()) +
                      " covariates, expected " + std::to_string(v_index_map_.size()));
    if (!std::all_of(r.v.begin(), r.v.end(), [](double v) { return std::isfinite(v); }))
      throw DataError("target record " + std::to_string(i) + " has a non-finite value");
    if (r.survey && !(r.survey->weight > 0.0 && std::isfinite(r.survey->weight)))
      throw DataError("target record " + std::to_string(i) + " has a non-positive survey weight");
  }

  if (record_ids_.empty()) {
    record_ids_.resize(n());
    std::iota(record_ids_.begin(), record_ids_.end(), std::size_t{0});
  } else if (record_ids_.size() != n()) {
    throw DataError("record id list does not match the number of records");
  }
}

bool CombinedSample::v_equals_x() const {
  if (v_index_map_.size() != d_) return false;
  for (std::size_t j = 0; j < d_; ++j)
    if (v_index_map_[j] != j) return false;
  return true;
}

bool CombinedSample::has_survey() const {
  return !target_.empty() &&
         std::all_of(target_.begin(), target_.end(), [](const TargetRecord& r) { return r.survey.has_value(); });
}

double CombinedSample::v(std::size_t i, std::size_t j) const {
  if (i < source_.size()) return source_[i].x[v_index_map_[j]];
  return target_[i - source_.size()].v[j];
}

std::vector<double> CombinedSample::v_row(std::size_t i) const {
  std::vector<double> out(dv());
  for (std::size_t j = 0; j < dv(); ++j) out[j] = v(i, j);
  return out;
}

std::vector<double> CombinedSample::x_row(std::size_t i) const {
  if (i < source_.size()) return source_[i].x;
  if (!v_equals_x()) throw UnsupportedConfiguration("full covariates of target records are unknown when V is a strict subset of X");
  return target_[i - source_.size()].v;
}

Eigen::MatrixXd CombinedSample::v_matrix() const {
  Eigen::MatrixXd m(n(), dv());
  for (std::size_t i = 0; i < n(); ++i)
    for (std::size_t j = 0; j < dv(); ++j) m(i, j) = v(i, j);
  return m;
}

Eigen::MatrixXd CombinedSample::source_x_matrix() const {
  Eigen::MatrixXd m(n1(), d_);
  for (std::size_t i = 0; i < n1(); ++i)
    for (std::size_t j = 0; j < d_; ++j) m(i, j) = source_[i].x[j];
  return m;
}

Eigen::MatrixXd CombinedSample::full_x_matrix() const {
  if (!v_equals_x()) throw UnsupportedConfiguration("full covariate matrix requires V = X");
  return v_matrix();
}

CombinedSample CombinedSample::subset(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<SourceRecord> src;
  std::vector<TargetRecord> tgt;
  std::vector<std::size_t> ids;
  ids.reserve(sorted.size());
  for (std::size_t i : sorted) {
    if (i >= n()) throw ArgumentError("subset index out of range");
    if (is_source(i)) {
      src.push_back(source_[i]);
      ids.push_back(record_ids_[i]);
    }
  }
  for (std::size_t i : sorted) {
    if (!is_source(i)) {
      tgt.push_back(target_[i - n1()]);
      ids.push_back(record_ids_[i]);
    }
  }
  CombinedSample out(std::move(src), std::move(tgt), v_index_map_, std::move(ids));
  if (out.source_.empty()) out.d_ = d_;
  return out;
}

// ---------------------------------------------------------------------------
// Folds

std::vector<std::size_t> FoldAssignment::members(int f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] == f) out.push_back(i);
  return out;
}

std::size_t FoldAssignment::size(int f) const {
  return static_cast<std::size_t>(std::count(fold.begin(), fold.end(), f));
}

FoldAssignment split_folds(std::size_t n, int k_folds, std::uint64_t seed) {
  if (k_folds < 2) throw ArgumentError("need at least 2 folds, got " + std::to_string(k_folds));
  if (static_cast<std::size_t>(k_folds) > n)
    throw ArgumentError("cannot split " + std::to_string(n) + " records into " +
                        std::to_string(k_folds) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with our own uniform draw keeps the permutation independent
  // of the standard library's shuffle implementation.
  Rng rng(derive_seed(seed, {n, static_cast<std::uint64_t>(k_folds)}));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  FoldAssignment out;
  out.k = k_folds;
  out.fold.assign(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos) out.fold[order[pos]] = static_cast<int>(pos % k_folds);
  return out;
}

// ---------------------------------------------------------------------------
// Clipping

void validate_clip_eps(double eps) {
  if (!(eps > 0.0 && eps < 0.5))
    throw ArgumentError("positivity constant eps must lie in (0, 0.5), got " + std::to_string(eps));
}

double clip_probability(double value, double eps) {
  return std::min(std::max(value, eps), 1.0 - eps);
}

std::vector<double> clip_probabilities(std::span<const double> values, double eps) {
  validate_clip_eps(eps);
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [eps](double v) { return clip_probability(v, eps); });
  return out;
}

// ---------------------------------------------------------------------------
// Estimates

EffectEstimate make_estimate(double point, double se, std::size_t n_used, EstimandSpec spec,
                             Method method, bool naive_se) {
  if (!(se >= 0.0)) throw NumericalError("standard error is negative or not a number");
  EffectEstimate e;
  e.point = point;
  e.se = se;
  e.ci_lower = point - kNormalQuantile975 * se;
  e.ci_upper = point + kNormalQuantile975 * se;
  e.n_used = n_used;
  e.spec = spec;
  e.method = method;
  e.naive_se = naive_se;
  return e;
}

std::string estimate_to_json(const EffectEstimate& e) {
  nlohmann::ordered_json j;
  j["point"] = e.point;
  j["se"] = e.se;
  j["ci_lower"] = e.ci_lower;
  j["ci_upper"] = e.ci_upper;
  j["n_used"] = e.n_used;
  j["kind"] = to_string(e.spec.kind);
  j["arm"] = to_string(e.spec.arm);
  j["method"] = to_string(e.method);
  if (e.naive_se) j["naive"] = true;
  return j.dump();
}

EffectEstimate estimate_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EffectEstimate e;
    e.point = j.at("point").get<double>();
    e.se = j.at("se").get<double>();
    e.ci_lower = j.at("ci_lower").get<double>();
    e.ci_upper = j.at("ci_upper").get<double>();
    e.n_used = j.at("n_used").get<std::size_t>();
    e.spec.kind = parse_kind(j.at("kind").get<std::string>());
    e.spec.arm = parse_arm(j.at("arm").get<std::string>());
    e.method = parse_method(j.at("method").get<std::string>());
    e.naive_se = j.value("naive", false);
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed estimate JSON: ") + ex.what());
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(trim(field));
  return fields;
}

struct CsvTable {
  std::map<std::string, std::size_t> column;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file " + path.string());
  CsvTable t;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!header_seen) {
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      if (trim(line).empty() || line[0] == '#') continue;
      const auto names = split_csv_line(line);
      for (std::size_t c = 0; c < names.size(); ++c) t.column[names[c]] = c;
      header_seen = true;
      continue;
    }
    if (!line.empty() && line[0] == '#') continue;
    if (trim(line).empty()) continue;
    t.rows.push_back(split_csv_line(line));
  }
  if (!header_seen) throw ConfigError("CSV file " + path.string() + " has no header row");
  return t;
}

std::size_t require_column(const CsvTable& t, const std::string& name, const std::filesystem::path& file) {
  const auto it = t.column.find(name);
  if (it == t.column.end())
    throw ConfigError("column '" + name + "' not found in " + file.string());
  return it->second;
}

bool is_missing(const std::string& field) {
  return field.empty() || field == "NA" || field == "NaN" || field == "nan" || field == ".";
}

std::optional<double> parse_double(const std::string& field) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::size_t> resolve_v_index_map(const Schema& schema) {
  if (schema.x_columns.empty()) throw ConfigError("schema lists no X columns");
  if (schema.v_columns.empty()) throw ConfigError("schema lists no V columns");
  std::vector<std::size_t> map;
  for (const auto& v : schema.v_columns) {
    const auto it = std::find(schema.x_columns.begin(), schema.x_columns.end(), v);
    if (it == schema.x_columns.end())
      throw SchemaError("V column '" + v + "' is not one of the X columns");
    map.push_back(static_cast<std::size_t>(it - schema.x_columns.begin()));
  }
  return map;
}

LoadResult load_combined_csv(const std::filesystem::path& source_path,
                             const std::filesystem::path& target_path, const Schema& schema) {
  const auto v_map = resolve_v_index_map(schema);
  const CsvTable src = read_csv(source_path);
  const CsvTable tgt = read_csv(target_path);

  const std::size_t a_col = require_column(src, schema.treatment, source_path);
  const std::size_t y_col = require_column(src, schema.outcome, source_path);
  std::vector<std::size_t> x_cols;
  for (const auto& name : schema.x_columns) x_cols.push_back(require_column(src, name, source_path));
  std::vector<std::size_t> v_cols;
  for (const auto& name : schema.v_columns) v_cols.push_back(require_column(tgt, name, target_path));

  const bool survey_declared = schema.stratum || schema.cluster || schema.weight;
  std::optional<std::size_t> h_col, c_col, w_col;
  if (survey_declared) {
    if (!(schema.stratum && schema.cluster && schema.weight))
      throw ConfigError("survey design needs stratum, cluster and weight columns together");
    const bool present = tgt.column.count(*schema.stratum) || tgt.column.count(*schema.cluster) ||
                         tgt.column.count(*schema.weight);
    if (present) {
      h_col = require_column(tgt, *schema.stratum, target_path);
      c_col = require_column(tgt, *schema.cluster, target_path);
      w_col = require_column(tgt, *schema.weight, target_path);
    }
  }

  LoadResult result;
  std::vector<SourceRecord> source;
  for (std::size_t r = 0; r < src.rows.size(); ++r) {
    const auto& row = src.rows[r];
    const std::string file = source_path.string();
    auto field = [&](std::size_t c) -> const std::string& {
      static const std::string empty;
      return c < row.size() ? row[c] : empty;
    };
    std::string missing;
    for (std::size_t c : {a_col, y_col})
      if (is_missing(field(c))) missing = c == a_col ? schema.treatment : schema.outcome;
    for (std::size_t j = 0; j < x_cols.size() && missing.empty(); ++j)
      if (is_missing(field(x_cols[j]))) missing = schema.x_columns[j];
    if (!missing.empty()) {
      result.rejected.push_back({file, r + 1, "missing value in column '" + missing + "'"});
      continue;
    }
    SourceRecord rec;
    const auto a = parse_double(field(a_col));
    if (!a || (*a != 0.0 && *a != 1.0))
      throw DataError(file + " row " + std::to_string(r + 1) + ": treatment value '" + field(a_col) +
                      "' is not 0 or 1");
    rec.a = static_cast<int>(*a);
    const auto y = parse_double(field(y_col));
    if (!y) throw DataError(file + " row " + std::to_string(r + 1) + ": outcome '" + field(y_col) + "' is not a number");
    rec.y = *y;
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      const auto x = parse_double(field(x_cols[j]));
      if (!x)
        throw DataError(file + " row " + std::to_string(r + 1) + ": column '" + schema.x_columns[j] +
                        "' value '" + field(x_cols[j]) + "' is not a number");
      rec.x.push_back(*x);
    }
    source.push_back(std::move(rec));
  }

  std::vector<TargetRecord> target;
  for (std::size_t r = 0; r < tgt.rows.size(); ++r) {
    const auto& row = tgt.rows[r];
    const std::string file = target_path.string();
    auto field = [&](std::size_t c) -> const std::string& {
      static const std::string empty;
      return c < row.size() ? row[c] : empty;
    };
    std::string missing;
    for (std::size_t j = 0; j < v_cols.size() && missing.empty(); ++j)
      if (is_missing(field(v_cols[j]))) missing = schema.v_columns[j];
    if (h_col && missing.empty()) {
      if (is_missing(field(*h_col))) missing = *schema.stratum;
      else if (is_missing(field(*c_col))) missing = *schema.cluster;
      else if (is_missing(field(*w_col))) missing = *schema.weight;
    }
    if (!missing.empty()) {
      result.rejected.push_back({file, r + 1, "missing value in column '" + missing + "'"});
      continue;
    }
    TargetRecord rec;
    for (std::size_t j = 0; j < v_cols.size(); ++j) {
      const auto v = parse_double(field(v_cols[j]));
      if (!v)
        throw DataError(file + " row " + std::to_string(r + 1) + ": column '" + schema.v_columns[j] +
                        "' value '" + field(v_cols[j]) + "' is not a number");
      rec.v.push_back(*v);
    }
    if (h_col) {
      const auto h = parse_double(field(*h_col));
      const auto c = parse_double(field(*c_col));
      const auto w = parse_double(field(*w_col));
      if (!h || !c || *h != std::floor(*h) || *c != std::floor(*c))
        throw DataError(file + " row " + std::to_string(r + 1) + ": stratum and cluster must be integers");
      if (!w || !(*w > 0.0))
        throw DataError(file + " row " + std::to_string(r + 1) + ": survey weight must be positive");
      rec.survey = SurveyInfo{static_cast<std::int64_t>(*h), static_cast<std::int64_t>(*c), *w};
    }
    target.push_back(std::move(rec));
  }

  if (source.empty() && target.empty()) throw DataError("no complete records in the input files");
  if (source.empty()) throw DataError("no complete source records in " + source_path.string());
  result.sample = CombinedSample(std::move(source), std::move(target), v_map);
  return result;
}

void write_combined_csv(const CombinedSample& sample, const Schema& schema,
                        const std::filesystem::path& source_path,
                        const std::filesystem::path& target_path) {
  if (schema.x_columns.size() != sample.d() || schema.v_columns.size() != sample.dv())
    throw SchemaError("schema column counts do not match the sample");
  if (resolve_v_index_map(schema) != sample.v_index_map())
    throw SchemaError("schema V columns do not match the sample's V index map");

  std::ofstream src(source_path);
  if (!src) throw ConfigError("cannot write " + source_path.string());
  src << schema.treatment << ',' << schema.outcome;
  for (const auto& name : schema.x_columns) src << ',' << name;
  src << '\n';
  for (const auto& r : sample.source()) {
    src << r.a << ',' << format_double(r.y);
    for (double x : r.x) src << ',' << format_double(x);
    src << '\n';
  }

  std::ofstream tgt(target_path);
  if (!tgt) throw ConfigError("cannot write " + target_path.string());
  const bool survey = sample.has_survey() && schema.stratum && schema.cluster && schema.weight;
  for (std::size_t j = 0; j < schema.v_columns.size(); ++j) tgt << (j ? "," : "") << schema.v_columns[j];
  if (survey) tgt << ',' << *schema.stratum << ',' << *schema.cluster << ',' << *schema.weight;
  tgt << '\n';
  for (const auto& r : sample.target()) {
    for (std::size_t j = 0; j < r.v.size(); ++j) tgt << (j ? "," : "") << format_double(r.v[j]);
    if (survey)
      tgt << ',' << r.survey->stratum << ',' << r.survey->cluster << ',' << format_double(r.survey->weight);
    tgt << '\n';
  }
}

}  // namespace transport
