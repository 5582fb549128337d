#include "transport/cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "transport/config.hpp"
#include "transport/dr_estimators.hpp"
#include "transport/error.hpp"
#include "transport/kernels.hpp"
#include "transport/nuisance.hpp"
#include "transport/parallel.hpp"
#include "transport/quadratic.hpp"
#include "transport/sensitivity.hpp"
#include "transport/simulation.hpp"
#include "transport/survey.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace transport {
namespace {

// ---------------------------------------------------------------------------
// Typed access to the flat config

std::string require(const KeyValueConfig& cfg, const std::string& key) {
  auto v = cfg.get(key);
  if (!v || v->empty()) throw ConfigError("missing required setting '" + key + "'");
  return *v;
}

double as_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const std::string t = trim(text);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v))
    throw ConfigError("setting '" + key + "' is not a number: '" + text + "'");
  return v;
}

std::uint64_t as_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const std::string t = trim(text);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ConfigError("setting '" + key + "' is not a nonnegative integer: '" + text + "'");
  return v;
}

int as_int(const std::string& key, const std::string& text) {
  const std::uint64_t v = as_u64(key, text);
  if (v > 1000000000ULL) throw ConfigError("setting '" + key + "' is out of range");
  return static_cast<int>(v);
}

bool as_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("setting '" + key + "' must be true or false");
}

std::vector<double> as_double_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(as_double(key, item));
  if (out.empty()) throw ConfigError("setting '" + key + "' is an empty list");
  return out;
}

std::vector<std::size_t> as_size_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) out.push_back(static_cast<std::size_t>(as_u64(key, item)));
  if (out.empty()) throw ConfigError("setting '" + key + "' is an empty list");
  return out;
}

void set_default(KeyValueConfig& cfg, const std::string& key, const std::string& value) {
  if (!cfg.contains(key)) cfg.set(key, value);
}

// Canonical spelling of a numeric setting so the rendered config is stable.
void canonical_double(KeyValueConfig& cfg, const std::string& key) {
  if (auto v = cfg.get(key)) cfg.set(key, format_double(as_double(key, *v)));
}

void canonical_double_list(KeyValueConfig& cfg, const std::string& key) {
  if (auto v = cfg.get(key)) {
    std::vector<std::string> items;
    for (double d : as_double_list(key, *v)) items.push_back(format_double(d));
    cfg.set(key, join_list(items));
  }
}

void canonical_size_list(KeyValueConfig& cfg, const std::string& key) {
  if (auto v = cfg.get(key)) {
    std::vector<std::string> items;
    for (std::size_t d : as_size_list(key, *v)) items.push_back(std::to_string(d));
    cfg.set(key, join_list(items));
  }
}

void canonical_u64(KeyValueConfig& cfg, const std::string& key) {
  if (auto v = cfg.get(key)) cfg.set(key, std::to_string(as_u64(key, *v)));
}

void reject_unknown(const KeyValueConfig& cfg, const std::set<std::string>& allowed, const std::string& command) {
  for (const auto& [key, value] : cfg.entries())
    if (!allowed.count(key)) throw ConfigError("setting '" + key + "' is not used by the " + command + " command");
}

// ---------------------------------------------------------------------------
// Data-driven settings shared by estimate and sensitivity

const std::vector<std::string> kSchemaKeys{"treatment", "outcome", "x_columns", "v_columns", "stratum", "cluster", "weight"};
const std::vector<std::pair<std::string, std::string>> kLearnerKeys{
    {"learner.pi", "logistic"}, {"learner.rho", "logistic"}, {"learner.mu0", "ridge lambda=1e-06"},
    {"learner.mu1", "ridge lambda=1e-06"}, {"learner.tau0", "ridge lambda=1e-06"}, {"learner.tau1", "ridge lambda=1e-06"},
    {"learner.pav", "logistic"}};

void add_data_keys(std::set<std::string>& keys) {
  for (const auto& k : {"source", "target", "eps", "folds", "seed", "tau_mode"}) keys.insert(k);
  for (const auto& k : kSchemaKeys) keys.insert(k);
  for (const auto& [k, v] : kLearnerKeys) keys.insert(k);
}

void resolve_data_keys(KeyValueConfig& cfg) {
  (void)require(cfg, "source");
  (void)require(cfg, "target");
  set_default(cfg, "eps", format_double(kDefaultClipEps));
  set_default(cfg, "folds", std::to_string(kDefaultFolds));
  set_default(cfg, "seed", "1");
  set_default(cfg, "tau_mode", "regression");
  canonical_double(cfg, "eps");
  canonical_u64(cfg, "folds");
  canonical_u64(cfg, "seed");
  validate_clip_eps(as_double("eps", *cfg.get("eps")));
  const std::string tau_mode = *cfg.get("tau_mode");
  if (tau_mode != "regression" && tau_mode != "pseudo_outcome")
    throw ConfigError("tau_mode must be regression or pseudo_outcome");
  for (const auto& [key, def] : kLearnerKeys) {
    set_default(cfg, key, def);
    const std::string text = *cfg.get(key);
    if (key == "learner.pav" && trim(text) == "none") continue;
    cfg.set(key, to_string(parse_learner_spec(text)));
  }
  Schema schema = schema_from_config(cfg);
  schema_to_config(schema, cfg);
}

NuisanceSpecs specs_from_config(const KeyValueConfig& cfg) {
  NuisanceSpecs s;
  s.pi = parse_learner_spec(*cfg.get("learner.pi"));
  s.rho = parse_learner_spec(*cfg.get("learner.rho"));
  s.mu0 = parse_learner_spec(*cfg.get("learner.mu0"));
  s.mu1 = parse_learner_spec(*cfg.get("learner.mu1"));
  s.tau0 = parse_learner_spec(*cfg.get("learner.tau0"));
  s.tau1 = parse_learner_spec(*cfg.get("learner.tau1"));
  const std::string pav = *cfg.get("learner.pav");
  if (trim(pav) == "none") s.pa_v.reset();
  else s.pa_v = parse_learner_spec(pav);
  s.tau_mode = *cfg.get("tau_mode") == "pseudo_outcome" ? TauMode::pseudo_outcome : TauMode::regression;
  return s;
}

struct FittedData {
  LoadResult loaded;
  NuisanceFit fit;
};

FittedData load_and_fit(const KeyValueConfig& cfg, int workers) {
  FittedData out;
  out.loaded = load_combined_csv(*cfg.get("source"), *cfg.get("target"), schema_from_config(cfg));
  const CombinedSample& sample = out.loaded.sample;
  const int k = as_int("folds", *cfg.get("folds"));
  const std::uint64_t seed = as_u64("seed", *cfg.get("seed"));
  const FoldAssignment folds = split_folds(sample.n(), k, seed);
  out.fit = cross_fit_nuisances(sample, specs_from_config(cfg), folds, as_double("eps", *cfg.get("eps")), seed, workers);
  return out;
}

ojson rejected_json(const std::vector<RejectedRow>& rows) {
  ojson arr = ojson::array();
  for (const auto& r : rows) arr.push_back(ojson{{"file", r.file}, {"row", r.row}, {"reason", r.reason}});
  return arr;
}

// ---------------------------------------------------------------------------
// Output staging: every artifact is written under a temporary name and renamed
// only when all of them were produced.

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

  std::vector<fs::path> commit() {
    std::vector<fs::path> temps, finals;
    try {
      fs::create_directories(dir_);
      for (const auto& [name, content] : files_) {
        const fs::path tmp = dir_ / ("." + name + ".partial");
        temps.push_back(tmp);
        std::ofstream f(tmp, std::ios::binary);
        f << content;
        f.close();
        if (!f) throw DataError("cannot write " + tmp.string());
      }
      for (std::size_t i = 0; i < files_.size(); ++i) {
        const fs::path dest = dir_ / files_[i].first;
        fs::rename(temps[i], dest);
        finals.push_back(dest);
      }
    } catch (const fs::filesystem_error& ex) {
      cleanup(temps, finals);
      throw DataError(std::string("cannot write outputs: ") + ex.what());
    } catch (...) {
      cleanup(temps, finals);
      throw;
    }
    return finals;
  }

 private:
  static void cleanup(const std::vector<fs::path>& temps, const std::vector<fs::path>& finals) {
    std::error_code ec;
    for (const auto& p : temps) fs::remove(p, ec);
    for (const auto& p : finals) fs::remove(p, ec);
  }

  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string csv_with_config(const KeyValueConfig& cfg, const std::string& header, const std::string& body) {
  return cfg.render(kEmbeddedConfigPrefix) + header + "\n" + body;
}

ojson config_json(const KeyValueConfig& cfg) {
  ojson j = ojson::object();
  for (const auto& [k, v] : cfg.entries()) j[k] = v;
  return j;
}

ojson estimate_json(const EffectEstimate& e) { return ojson::parse(estimate_to_json(e)); }

std::vector<EstimandKind> kinds_of(const std::string& text) {
  if (text == "both") return {EstimandKind::generalization, EstimandKind::transportation};
  return {parse_kind(text)};
}

// ---------------------------------------------------------------------------
// Commands

struct CommandContext {
  KeyValueConfig cfg;
  int workers = 1;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

Outputs run_estimate(CommandContext& ctx) {
  KeyValueConfig& cfg = ctx.cfg;
  std::set<std::string> allowed{"command", "out", "kind", "arm", "dump_influence"};
  add_data_keys(allowed);
  reject_unknown(cfg, allowed, "estimate");
  resolve_data_keys(cfg);
  set_default(cfg, "kind", "both");
  set_default(cfg, "arm", "all");
  set_default(cfg, "dump_influence", "false");
  set_default(cfg, "out", "transport-out");
  std::vector<Arm> arms{Arm::control, Arm::treated, Arm::contrast};
  if (*cfg.get("arm") != "all") {
    arms = {parse_arm(*cfg.get("arm"))};
    cfg.set("arm", arms[0] == Arm::contrast ? "contrast" : std::to_string(arm_value(arms[0])));
  }
  const std::string kind_text = *cfg.get("kind");
  if (kind_text != "both") cfg.set("kind", parse_kind(kind_text) == EstimandKind::generalization ? "ge" : "tr");
  const auto kinds = kinds_of(*cfg.get("kind"));
  const bool dump = as_bool("dump_influence", *cfg.get("dump_influence"));

  const FittedData data = load_and_fit(cfg, ctx.workers);
  const CombinedSample& sample = data.loaded.sample;
  Outputs outputs(*cfg.get("out"));

  ojson doc;
  doc["config"] = config_json(cfg);
  doc["n_source"] = sample.n1();
  doc["n_target"] = sample.n2();
  ojson estimates = ojson::array();
  ojson warnings = ojson::array();
  for (EstimandKind kind : kinds) {
    for (Arm arm : arms) {
      estimates.push_back(estimate_json(plugin_estimate(sample, data.fit, arm, kind)));
      estimates.push_back(estimate_json(dr_estimate(sample, data.fit, arm, kind)));
    }
    if (dump) {
      for (int a = 0; a < 2; ++a) {
        const InfluenceValues iv = influence_values(sample, data.fit, a, kind);
        std::string body;
        for (std::size_t i = 0; i < iv.values.size(); ++i)
          body += std::to_string(sample.record_ids()[i]) + "," + format_double(iv.values[i]) + "\n";
        outputs.add("influence_" + std::string(kind == EstimandKind::generalization ? "ge" : "tr") + "_" +
                        std::to_string(a) + ".csv",
                    csv_with_config(cfg, "record_id,value", body));
      }
    }
  }
  doc["estimates"] = estimates;

  if (sample.has_survey()) {
    ojson survey = ojson::array();
    std::set<std::int64_t> flagged;
    for (Arm arm : arms) {
      const SurveyTransportResult r = survey_transport_estimate(sample, data.fit, arm);
      survey.push_back(estimate_json(r.estimate));
      flagged.insert(r.single_cluster_strata.begin(), r.single_cluster_strata.end());
    }
    doc["survey_estimates"] = survey;
    for (std::int64_t h : flagged) {
      const std::string msg = "stratum " + std::to_string(h) + " has a single sampled cluster; its variance contribution is set to 0";
      warnings.push_back(msg);
      *ctx.err << "warning: " << msg << "\n";
    }
  }
  if (!data.loaded.rejected.empty()) {
    const std::string msg = std::to_string(data.loaded.rejected.size()) + " input rows with missing fields were dropped";
    warnings.push_back(msg);
    *ctx.err << "warning: " << msg << "\n";
  }
  doc["warnings"] = warnings;
  doc["rejected_rows"] = rejected_json(data.loaded.rejected);
  outputs.add("estimate.json", doc.dump(2) + "\n");
  return outputs;
}

Outputs run_sensitivity(CommandContext& ctx) {
  KeyValueConfig& cfg = ctx.cfg;
  const bool arithmetic = cfg.contains("point");
  std::set<std::string> allowed{"command", "out", "kind", "arm", "delta1", "delta2", "curve_points"};
  if (arithmetic) {
    allowed.insert({"point", "p_target"});
  } else {
    add_data_keys(allowed);
  }
  reject_unknown(cfg, allowed, "sensitivity");
  set_default(cfg, "kind", "tr");
  set_default(cfg, "arm", "contrast");
  set_default(cfg, "delta1", "0");
  set_default(cfg, "delta2", "0");
  set_default(cfg, "curve_points", "101");
  set_default(cfg, "out", "transport-out");
  const EstimandKind kind = parse_kind(*cfg.get("kind"));
  cfg.set("kind", kind == EstimandKind::generalization ? "ge" : "tr");
  const Arm arm = parse_arm(*cfg.get("arm"));
  cfg.set("arm", arm == Arm::contrast ? "contrast" : std::to_string(arm_value(arm)));
  canonical_double(cfg, "delta1");
  canonical_double(cfg, "delta2");
  canonical_u64(cfg, "curve_points");
  const double delta1 = as_double("delta1", *cfg.get("delta1"));
  const double delta2 = as_double("delta2", *cfg.get("delta2"));
  const int points = as_int("curve_points", *cfg.get("curve_points"));

  double ate_point = 0.0, p_target = 0.0;
  SensitivityBound bound;
  if (arithmetic) {
    canonical_double(cfg, "point");
    ate_point = as_double("point", *cfg.get("point"));
    if (arm != Arm::contrast)
      throw ConfigError("a supplied point estimate supports the contrast arm only; single-arm bounds need data");
    if (kind == EstimandKind::generalization) {
      canonical_double(cfg, "p_target");
      p_target = as_double("p_target", require(cfg, "p_target"));
    } else if (cfg.contains("p_target")) {
      throw ConfigError("p_target is only used for generalization bounds");
    }
    bound = ate_interval(ate_point, delta1, delta2, kind, p_target);
  } else {
    resolve_data_keys(cfg);
    const FittedData data = load_and_fit(cfg, ctx.workers);
    const CombinedSample& sample = data.loaded.sample;
    p_target = static_cast<double>(sample.n2()) / static_cast<double>(sample.n());
    bound = sensitivity_interval(sample, data.fit, delta1, delta2, {kind, arm});
    ate_point = arm == Arm::contrast ? bound.center : dr_estimate(sample, data.fit, Arm::contrast, kind).point;
  }

  Outputs outputs(*cfg.get("out"));
  const std::string kind_tag(kind == EstimandKind::generalization ? "ge" : "tr");
  const std::string arm_tag = *cfg.get("arm");
  outputs.add("interval.csv",
              csv_with_config(cfg, "delta1,delta2,kind,arm,center,lower,upper",
                              format_double(bound.delta1) + "," + format_double(bound.delta2) + "," + kind_tag + "," +
                                  arm_tag + "," + format_double(bound.center) + "," + format_double(bound.lower) + "," +
                                  format_double(bound.upper) + "\n"));
  std::string be;
  be += "delta1_only," + kind_tag + "," + format_double(ate_point) + "," +
        format_double(breakeven_delta(ate_point, BreakevenMode::delta1_only, kind, p_target)) + "\n";
  be += "delta2_only," + kind_tag + "," + format_double(ate_point) + "," +
        format_double(breakeven_delta(ate_point, BreakevenMode::delta2_only, kind, p_target)) + "\n";
  outputs.add("breakeven.csv", csv_with_config(cfg, "mode,kind,ate_point,value", be));
  std::string curve;
  for (const auto& c : breakeven_curve(ate_point, kind, p_target, points))
    curve += format_double(c.delta1) + "," + format_double(c.delta2) + "," + format_double(c.lower) + "," +
             format_double(c.upper) + "\n";
  outputs.add("curve.csv", csv_with_config(cfg, "delta1,delta2,lower,upper", curve));
  return outputs;
}

NoiseSharing parse_noise(const std::string& text) {
  if (text == "per_dataset") return NoiseSharing::per_dataset;
  if (text == "per_record") return NoiseSharing::per_record;
  throw ConfigError("noise must be per_dataset or per_record");
}

Outputs run_simulate(CommandContext& ctx) {
  KeyValueConfig& cfg = ctx.cfg;
  reject_unknown(cfg,
                 {"command", "out", "seed", "n_grid", "alpha_grid", "reps", "estimators", "noise", "kind", "arm", "eps",
                  "k_basis", "basis", "export_sample"},
                 "simulate");
  set_default(cfg, "seed", "1");
  set_default(cfg, "n_grid", "100,1000,5000");
  set_default(cfg, "alpha_grid", "0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5");
  set_default(cfg, "reps", "1000");
  set_default(cfg, "estimators", "plugin,dr");
  set_default(cfg, "noise", "per_dataset");
  set_default(cfg, "kind", "tr");
  set_default(cfg, "arm", "1");
  set_default(cfg, "eps", format_double(kDefaultClipEps));
  set_default(cfg, "basis", "cosine");
  set_default(cfg, "export_sample", "0");
  set_default(cfg, "out", "transport-out");
  canonical_u64(cfg, "seed");
  canonical_size_list(cfg, "n_grid");
  canonical_double_list(cfg, "alpha_grid");
  canonical_u64(cfg, "reps");
  canonical_double(cfg, "eps");
  canonical_u64(cfg, "export_sample");
  if (cfg.contains("k_basis")) canonical_u64(cfg, "k_basis");

  RmseStudyConfig sc;
  sc.seed = as_u64("seed", *cfg.get("seed"));
  sc.n_grid = as_size_list("n_grid", *cfg.get("n_grid"));
  sc.alpha_grid = as_double_list("alpha_grid", *cfg.get("alpha_grid"));
  sc.reps = as_int("reps", *cfg.get("reps"));
  sc.estimators.clear();
  std::vector<std::string> tags;
  for (const auto& t : split_list(*cfg.get("estimators"))) {
    sc.estimators.push_back(parse_estimator_tag(t));
    tags.emplace_back(to_string(sc.estimators.back()));
  }
  cfg.set("estimators", join_list(tags));
  sc.sharing = parse_noise(*cfg.get("noise"));
  sc.spec.kind = parse_kind(*cfg.get("kind"));
  cfg.set("kind", sc.spec.kind == EstimandKind::generalization ? "ge" : "tr");
  sc.spec.arm = parse_arm(*cfg.get("arm"));
  cfg.set("arm", sc.spec.arm == Arm::contrast ? "contrast" : std::to_string(arm_value(sc.spec.arm)));
  sc.eps = as_double("eps", *cfg.get("eps"));
  validate_clip_eps(sc.eps);
  sc.basis = parse_basis_kind(*cfg.get("basis"));
  if (cfg.contains("k_basis")) sc.k_basis = static_cast<std::size_t>(as_u64("k_basis", *cfg.get("k_basis")));
  sc.workers = ctx.workers;
  for (std::size_t n : sc.n_grid)
    if (n < 10) throw ConfigError("every n in n_grid must be >= 10");

  const RmseTable table = rmse_study(sc);
  Outputs outputs(*cfg.get("out"));
  std::string body;
  for (const auto& r : table.rows)
    body += std::string(to_string(r.estimator)) + "," + std::to_string(r.n) + "," + format_double(r.alpha) + "," +
            format_double(r.rmse) + "," + format_double(r.bias) + "," + format_double(r.mc_se) + "," +
            std::to_string(r.reps) + "\n";
  outputs.add("rmse.csv", csv_with_config(cfg, "estimator,n,alpha,rmse,bias,mc_se,reps", body));
  for (std::size_t n : sc.n_grid) {
    std::string plot;
    for (const auto& r : table.rows)
      if (r.n == n) plot += format_double(r.alpha) + "," + format_double(r.rmse) + "," + std::string(to_string(r.estimator)) + "\n";
    outputs.add("rmse_plot_n" + std::to_string(n) + ".csv", csv_with_config(cfg, "x,y,series", plot));
  }

  const std::size_t export_n = static_cast<std::size_t>(as_u64("export_sample", *cfg.get("export_sample")));
  if (export_n > 0) {
    const SimulatedData data = simulate_dgp(export_n, sc.seed);
    Schema schema;
    schema.x_columns = {"X1", "X2", "X3", "X4", "X5"};
    schema.v_columns = {"X1", "X2", "X3"};
    const fs::path tmp_dir = fs::temp_directory_path() / ("transport-export-" + std::to_string(sc.seed) + "-" + std::to_string(export_n));
    fs::create_directories(tmp_dir);
    write_combined_csv(data.sample, schema, tmp_dir / "source.csv", tmp_dir / "target.csv");
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    outputs.add("source.csv", cfg.render(kEmbeddedConfigPrefix) + slurp(tmp_dir / "source.csv"));
    outputs.add("target.csv", cfg.render(kEmbeddedConfigPrefix) + slurp(tmp_dir / "target.csv"));
    std::error_code ec;
    fs::remove_all(tmp_dir, ec);
    KeyValueConfig schema_cfg;
    schema_to_config(schema, schema_cfg);
    outputs.add("schema.cfg", schema_cfg.render());
  }
  return outputs;
}

Outputs run_quadratic_compare(CommandContext& ctx) {
  KeyValueConfig& cfg = ctx.cfg;
  reject_unknown(cfg,
                 {"command", "out", "seed", "n_grid", "k_grid", "alpha_grid", "reps", "basis", "kind", "arm", "noise",
                  "eps", "fix_nuisances"},
                 "quadratic-compare");
  set_default(cfg, "seed", "1");
  set_default(cfg, "n_grid", "500,1000");
  set_default(cfg, "k_grid", "10,50,200");
  set_default(cfg, "alpha_grid", "0.25");
  set_default(cfg, "reps", "200");
  set_default(cfg, "basis", "cosine");
  set_default(cfg, "kind", "tr");
  set_default(cfg, "arm", "1");
  set_default(cfg, "noise", "per_dataset");
  set_default(cfg, "eps", format_double(kDefaultClipEps));
  set_default(cfg, "fix_nuisances", "false");
  set_default(cfg, "out", "transport-out");
  canonical_u64(cfg, "seed");
  canonical_size_list(cfg, "n_grid");
  canonical_size_list(cfg, "k_grid");
  canonical_double_list(cfg, "alpha_grid");
  canonical_u64(cfg, "reps");
  canonical_double(cfg, "eps");

  QuadraticCompareConfig qc;
  qc.seed = as_u64("seed", *cfg.get("seed"));
  qc.n_grid = as_size_list("n_grid", *cfg.get("n_grid"));
  qc.k_grid = as_size_list("k_grid", *cfg.get("k_grid"));
  qc.alpha_grid = as_double_list("alpha_grid", *cfg.get("alpha_grid"));
  qc.reps = as_int("reps", *cfg.get("reps"));
  qc.basis = parse_basis_kind(*cfg.get("basis"));
  qc.spec.kind = parse_kind(*cfg.get("kind"));
  cfg.set("kind", qc.spec.kind == EstimandKind::generalization ? "ge" : "tr");
  qc.spec.arm = parse_arm(*cfg.get("arm"));
  if (qc.spec.arm == Arm::contrast) throw ConfigError("quadratic-compare needs arm 0 or 1");
  cfg.set("arm", std::to_string(arm_value(qc.spec.arm)));
  qc.sharing = parse_noise(*cfg.get("noise"));
  qc.eps = as_double("eps", *cfg.get("eps"));
  validate_clip_eps(qc.eps);
  qc.fix_nuisances = as_bool("fix_nuisances", *cfg.get("fix_nuisances"));
  cfg.set("fix_nuisances", qc.fix_nuisances ? "true" : "false");
  qc.workers = ctx.workers;
  for (std::size_t n : qc.n_grid)
    if (n < 10) throw ConfigError("every n in n_grid must be >= 10");

  const auto rows = quadratic_compare(qc);
  std::string body;
  for (const auto& r : rows)
    body += std::string(to_string(r.method)) + "," + std::to_string(r.n) + "," + std::to_string(r.k) + "," +
            format_double(r.alpha) + "," + format_double(r.bias) + "," + format_double(r.rmse) + "," +
            format_double(r.var) + "\n";
  Outputs outputs(*cfg.get("out"));
  outputs.add("quadratic_compare.csv", csv_with_config(cfg, "method,n,k,alpha,bias,rmse,var", body));
  return outputs;
}

ojson error_json(const std::string& category, const std::string& message, int code) {
  ojson e;
  e["category"] = category;
  e["message"] = message;
  e["exit_code"] = code;
  return ojson{{"error", e}};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generalization and transportation of treatment effects"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  struct Binding {
    CLI::App* sub;
    CLI::Option* opt;
    std::string key;
  };
  std::vector<Binding> bindings;
  std::map<std::string, std::string> values;  // binding storage keyed by "<sub>/<key>"
  std::map<std::string, std::vector<std::string>> learner_flags;
  std::map<std::string, std::string> config_paths, schema_paths, simd, workers;

  auto bind = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    auto* opt = sub->add_option(flag, values[sub->get_name() + "/" + key], help);
    bindings.push_back({sub, opt, key});
  };
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_paths[sub->get_name()], "Run-config file, or any artifact with an embedded config");
    sub->add_option("--workers", workers[sub->get_name()], "Worker threads (default: logical cores)");
    sub->add_option("--simd", simd[sub->get_name()], "Kernel backend: auto, scalar or avx2");
    bind(sub, "--seed", "seed", "Random seed");
    bind(sub, "--out", "out", "Output directory");
  };
  auto data_flags = [&](CLI::App* sub) {
    bind(sub, "--source", "source", "Source CSV (treatment, outcome, X columns)");
    bind(sub, "--target", "target", "Target CSV (V columns, optional survey columns)");
    sub->add_option("--schema", schema_paths[sub->get_name()], "Schema file (key = value)");
    bind(sub, "--eps", "eps", "Probability clip eps (default 0.01)");
    bind(sub, "--folds", "folds", "Cross-fitting folds (default 5)");
    bind(sub, "--tau-mode", "tau_mode", "regression or pseudo_outcome");
    sub->add_option("--learner", learner_flags[sub->get_name()], "Learner override NAME=SPEC, e.g. mu1='knn k=20'");
  };

  auto* est = app.add_subcommand("estimate", "Plug-in and doubly robust estimates from CSV data");
  common(est);
  data_flags(est);
  bind(est, "--kind", "kind", "ge, tr or both (default both)");
  bind(est, "--arm", "arm", "0, 1, contrast or all (default all)");
  bind(est, "--dump-influence", "dump_influence", "Also write per-record influence values (true/false)");

  auto* sim = app.add_subcommand("simulate", "RMSE of plug-in/dr/qr estimators across noise rates");
  common(sim);
  bind(sim, "--n-grid", "n_grid", "Comma-separated sample sizes");
  bind(sim, "--alpha-grid", "alpha_grid", "Comma-separated noise exponents in (0, 0.5]");
  bind(sim, "--reps", "reps", "Replications per cell");
  bind(sim, "--estimators", "estimators", "Comma-separated subset of plugin,dr,qr");
  bind(sim, "--noise", "noise", "per_dataset or per_record");
  bind(sim, "--kind", "kind", "ge or tr (default tr)");
  bind(sim, "--arm", "arm", "0, 1 or contrast (default 1)");
  bind(sim, "--eps", "eps", "Probability clip eps (default 0.01)");
  bind(sim, "--k-basis", "k_basis", "Basis dimension for qr");
  bind(sim, "--export-sample", "export_sample", "Also write one simulated sample of this size as CSV");

  auto* sens = app.add_subcommand("sensitivity", "Bounds under relaxed exchangeability and transportability");
  common(sens);
  data_flags(sens);
  bind(sens, "--kind", "kind", "ge or tr (default tr)");
  bind(sens, "--arm", "arm", "0, 1 or contrast (default contrast)");
  bind(sens, "--delta1", "delta1", "Exchangeability violation bound");
  bind(sens, "--delta2", "delta2", "Transportability violation bound");
  bind(sens, "--point", "point", "Use this ATE point estimate instead of data");
  bind(sens, "--p-target", "p_target", "P(S = 0) for generalization bounds with --point");
  bind(sens, "--curve-points", "curve_points", "Grid size of the break-even curve (default 101)");

  auto* qc = app.add_subcommand("quadratic-compare", "Bias/variance of quadratic vs doubly robust estimators");
  common(qc);
  bind(qc, "--n-grid", "n_grid", "Comma-separated sample sizes");
  bind(qc, "--k-basis", "k_grid", "Comma-separated basis dimensions");
  bind(qc, "--alpha-grid", "alpha_grid", "Comma-separated noise exponents in (0, 0.5]");
  bind(qc, "--reps", "reps", "Replications per cell");
  bind(qc, "--basis", "basis", "cosine or histogram");
  bind(qc, "--kind", "kind", "ge or tr (default tr)");
  bind(qc, "--arm", "arm", "0 or 1 (default 1)");
  bind(qc, "--noise", "noise", "per_dataset or per_record");
  bind(qc, "--fix-nuisances", "fix_nuisances", "Hold nuisances and training data fixed across replications");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << error_json("argument", ex.what(), 2).dump() << "\n";
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    CommandContext ctx;
    ctx.out = &out;
    ctx.err = &err;
    if (!config_paths[name].empty()) ctx.cfg = KeyValueConfig::from_file(config_paths[name]);
    if (auto c = ctx.cfg.get("command"); c && *c != name)
      throw ConfigError("config was written by the '" + *c + "' command, not '" + name + "'");
    if (!schema_paths[name].empty()) {
      const KeyValueConfig schema = KeyValueConfig::from_file(schema_paths[name]);
      for (const auto& [k, v] : schema.entries()) ctx.cfg.set(k, v);
    }
    for (const auto& b : bindings)
      if (b.sub == sub && b.opt->count() > 0) ctx.cfg.set(b.key, values[name + "/" + b.key]);
    for (const auto& spec : learner_flags[name]) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw ConfigError("--learner expects NAME=SPEC, got '" + spec + "'");
      ctx.cfg.set("learner." + trim(spec.substr(0, eq)), trim(spec.substr(eq + 1)));
    }
    ctx.cfg.set("command", name);

    ctx.workers = workers[name].empty() ? resolve_workers(0) : as_int("workers", workers[name]);
    if (ctx.workers < 1) throw ConfigError("--workers must be >= 1");
    if (!simd[name].empty()) kernels::set_backend(kernels::parse_backend(simd[name]));

    Outputs outputs = name == "estimate"   ? run_estimate(ctx)
                      : name == "simulate" ? run_simulate(ctx)
                      : name == "sensitivity" ? run_sensitivity(ctx)
                                              : run_quadratic_compare(ctx);
    for (const auto& p : outputs.commit()) out << "wrote " << p.string() << "\n";
    return 0;
  } catch (const ConvergenceError& ex) {
    ojson j = error_json(ex.category(), ex.what(), static_cast<int>(ex.exit_code()));
    j["error"]["last_iterate"] = ex.last_iterate();
    err << j.dump() << "\n";
    return static_cast<int>(ex.exit_code());
  } catch (const Error& ex) {
    err << error_json(ex.category(), ex.what(), static_cast<int>(ex.exit_code())).dump() << "\n";
    return static_cast<int>(ex.exit_code());
  } catch (const std::exception& ex) {
    err << error_json("internal", ex.what(), 1).dump() << "\n";
    return 1;
  }
}

}  // namespace transport
