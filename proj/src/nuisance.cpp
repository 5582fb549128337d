#include "transport/nuisance.hpp"

#include <cmath>
#include <limits>

#include "transport/error.hpp"
#include "transport/parallel.hpp"
#include "transport/rng.hpp"

namespace transport {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd rows_of(const CombinedSample& sample, std::span<const std::size_t> idx, bool use_x) {
  const std::size_t cols = use_x ? sample.d() : sample.dv();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto row = use_x ? sample.x_row(idx[r]) : sample.v_row(idx[r]);
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = row[j];
  }
  return m;
}

// Records whose full covariate row is available.
bool has_x(const CombinedSample& sample, std::size_t i, bool v_is_x) { return sample.is_source(i) || v_is_x; }

void require_both_labels(const Eigen::VectorXd& y, const std::string& what) {
  bool zero = false, one = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) (y(i) == 1.0 ? one : zero) = true;
  if (!zero || !one) throw DataError(what + ": training labels are all identical");
}

FittedModel fit_probability(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const std::string& what) {
  if (y.size() < 2) throw DataError(what + ": fewer than 2 training records");
  if (spec.family == LearnerFamily::logistic) require_both_labels(y, what);
  return fit_learner(spec, x, y, true);
}

FittedModel fit_regression(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const std::string& what) {
  if (y.size() < 2) throw DataError(what + ": fewer than 2 training records");
  return fit_learner(spec, x, y, false);
}

// Every nuisance model trained on one set of records.
struct ModelSet {
  FittedModel pi1, rho, pa_v;
  FittedModel mu[2], tau[2];
  bool has_pa_v = false;
};

ModelSet train_models(const CombinedSample& sample, const NuisanceSpecs& specs,
                      std::span<const std::size_t> train, const std::string& label) {
  std::vector<std::size_t> src;
  std::vector<std::size_t> by_arm[2];
  for (std::size_t i : train) {
    if (!sample.is_source(i)) continue;
    src.push_back(i);
    by_arm[sample.source()[i].a].push_back(i);
  }
  ModelSet m;
  const Eigen::MatrixXd x_src = rows_of(sample, src, true);
  const Eigen::MatrixXd v_src = rows_of(sample, src, false);
  Eigen::VectorXd a_src(static_cast<Eigen::Index>(src.size()));
  for (std::size_t r = 0; r < src.size(); ++r) a_src(static_cast<Eigen::Index>(r)) = sample.source()[src[r]].a;

  m.pi1 = fit_probability(specs.pi, x_src, a_src, label + ", propensity");

  const Eigen::MatrixXd v_all = rows_of(sample, train, false);
  Eigen::VectorXd s_all(static_cast<Eigen::Index>(train.size()));
  for (std::size_t r = 0; r < train.size(); ++r) s_all(static_cast<Eigen::Index>(r)) = sample.is_source(train[r]) ? 1.0 : 0.0;
  m.rho = fit_probability(specs.rho, v_all, s_all, label + ", participation");

  for (int a = 0; a < 2; ++a) {
    const auto& idx = by_arm[a];
    if (idx.empty())
      throw DataError(label + ", arm " + std::to_string(a) + ": no source records with this treatment to train on");
    Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) y(static_cast<Eigen::Index>(r)) = sample.source()[idx[r]].y;
    m.mu[a] = fit_regression(specs.mu(a), rows_of(sample, idx, true), y,
                             label + ", arm " + std::to_string(a) + " outcome");
  }

  const std::vector<double> pi_train = m.pi1.predict_rows(x_src);
  for (int a = 0; a < 2; ++a) {
    const std::vector<double> mu_train = m.mu[a].predict_rows(x_src);
    Eigen::VectorXd response(static_cast<Eigen::Index>(src.size()));
    for (std::size_t r = 0; r < src.size(); ++r) {
      if (specs.tau_mode == TauMode::regression) {
        response(static_cast<Eigen::Index>(r)) = mu_train[r];
      } else {
        const auto& rec = sample.source()[src[r]];
        const double p1 = std::clamp(pi_train[r], 1e-12, 1.0 - 1e-12);
        response(static_cast<Eigen::Index>(r)) = pseudo_outcome(rec.a, rec.y, a, mu_train[r], a == 1 ? p1 : 1.0 - p1);
      }
    }
    m.tau[a] = fit_regression(specs.tau(a), v_src, response, label + ", arm " + std::to_string(a) + " nested regression");
  }

  if (specs.pa_v) {
    m.pa_v = fit_probability(*specs.pa_v, v_src, a_src, label + ", treatment given V");
    m.has_pa_v = true;
  }
  return m;
}

void predict_into(const CombinedSample& sample, const ModelSet& m, std::span<const std::size_t> idx, double eps,
                  NuisanceFit& fit) {
  const bool v_is_x = sample.v_equals_x();
  for (std::size_t i : idx) {
    const auto v = sample.v_row(i);
    fit.rho[i] = clip_probability(m.rho.predict(v), eps);
    for (int a = 0; a < 2; ++a) fit.tau[a][i] = m.tau[a].predict(v);
    if (m.has_pa_v) fit.pa_v[i] = clip_probability(m.pa_v.predict(v), eps);
    if (has_x(sample, i, v_is_x)) {
      const auto x = sample.x_row(i);
      fit.pi1[i] = clip_probability(m.pi1.predict(x), eps);
      for (int a = 0; a < 2; ++a) fit.mu[a][i] = m.mu[a].predict(x);
    }
  }
}

NuisanceFit empty_fit(std::size_t n, double eps, bool with_pa_v) {
  NuisanceFit fit;
  fit.pi1.assign(n, kNaN);
  fit.rho.assign(n, kNaN);
  for (int a = 0; a < 2; ++a) {
    fit.mu[a].assign(n, kNaN);
    fit.tau[a].assign(n, kNaN);
  }
  if (with_pa_v) fit.pa_v.assign(n, kNaN);
  fit.eps = eps;
  return fit;
}

}  // namespace

void NuisanceFit::validate(const CombinedSample& sample) const {
  const std::size_t n = sample.n();
  if (rho.size() != n || pi1.size() != n || mu[0].size() != n || mu[1].size() != n || tau[0].size() != n ||
      tau[1].size() != n || (!pa_v.empty() && pa_v.size() != n))
    throw ArgumentError("nuisance fit does not match the sample size");
  auto check_prob = [&](double p, const char* what, std::size_t i) {
    if (!(p >= eps && p <= 1.0 - eps))
      throw ArgumentError(std::string(what) + " of record " + std::to_string(i) + " is outside [eps, 1 - eps]");
  };
  for (std::size_t i = 0; i < n; ++i) {
    check_prob(rho[i], "participation probability", i);
    if (!pa_v.empty()) check_prob(pa_v[i], "treatment probability given V", i);
    if (!std::isfinite(tau[0][i]) || !std::isfinite(tau[1][i]))
      throw ArgumentError("nested regression of record " + std::to_string(i) + " is not finite");
    if (sample.is_source(i)) {
      check_prob(pi1[i], "propensity", i);
      if (!std::isfinite(mu[0][i]) || !std::isfinite(mu[1][i]))
        throw ArgumentError("outcome regression of record " + std::to_string(i) + " is not finite");
    }
  }
}

NuisanceFit cross_fit_nuisances(const CombinedSample& sample, const NuisanceSpecs& specs,
                                const FoldAssignment& folds, double eps, std::uint64_t seed, int workers) {
  validate_clip_eps(eps);
  if (folds.fold.size() != sample.n()) throw ArgumentError("fold assignment does not cover the sample");
  if (folds.k < 2) throw ArgumentError("cross-fitting needs at least 2 folds");

  auto models = parallel_map(static_cast<std::size_t>(folds.k), workers, [&](std::size_t f) {
    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < sample.n(); ++i)
      if (folds.fold[i] != static_cast<int>(f)) train.push_back(i);
    return train_models(sample, specs, train, "fold " + std::to_string(f));
  });

  NuisanceFit fit = empty_fit(sample.n(), eps, specs.pa_v.has_value());
  for (int f = 0; f < folds.k; ++f) predict_into(sample, models[static_cast<std::size_t>(f)], folds.members(f), eps, fit);
  fit.provenance = FitProvenance::cross_fitted;
  fit.folds = folds;
  fit.seed = seed;
  return fit;
}

NuisanceFit fit_single_split(const CombinedSample& sample, const NuisanceSpecs& specs,
                             std::span<const std::size_t> train_indices, double eps) {
  validate_clip_eps(eps);
  for (std::size_t i : train_indices)
    if (i >= sample.n()) throw ArgumentError("training index out of range");
  const ModelSet models = train_models(sample, specs, train_indices, "training split");
  NuisanceFit fit = empty_fit(sample.n(), eps, specs.pa_v.has_value());
  std::vector<std::size_t> all(sample.n());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  predict_into(sample, models, all, eps, fit);
  fit.provenance = FitProvenance::single_split;
  for (std::size_t i : train_indices) fit.training_ids.push_back(sample.record_ids()[i]);
  return fit;
}

double pseudo_outcome(int a_observed, double y, int arm, double mu_hat, double pi_hat) {
  return (a_observed == arm ? (y - mu_hat) / pi_hat : 0.0) + mu_hat;
}

std::vector<double> pseudo_outcome_tau(const CombinedSample& sample, const NuisanceFit& fit,
                                       const LearnerSpec& spec, const FoldAssignment& folds, int arm) {
  if (arm != 0 && arm != 1) throw ArgumentError("pseudo-outcome arm must be 0 or 1");
  if (folds.fold.size() != sample.n()) throw ArgumentError("fold assignment does not cover the sample");
  std::vector<double> out(sample.n(), kNaN);
  for (int f = 0; f < folds.k; ++f) {
    std::vector<std::size_t> train;
    bool arm_present = false;
    for (std::size_t i = 0; i < sample.n1(); ++i) {
      if (folds.fold[i] == f) continue;
      const double mu = fit.mu[arm][i];
      const double pi = fit.pi(arm, i);
      if (!std::isfinite(mu) || !(pi > 0.0)) throw ArgumentError("fit lacks outcome or propensity predictions for source records");
      train.push_back(i);
      arm_present = arm_present || sample.source()[i].a == arm;
    }
    if (!arm_present)
      throw DataError("fold " + std::to_string(f) + ", arm " + std::to_string(arm) + ": no source records with this treatment");
    Eigen::VectorXd g(static_cast<Eigen::Index>(train.size()));
    for (std::size_t r = 0; r < train.size(); ++r) {
      const auto& rec = sample.source()[train[r]];
      g(static_cast<Eigen::Index>(r)) = pseudo_outcome(rec.a, rec.y, arm, fit.mu[arm][train[r]], fit.pi(arm, train[r]));
    }
    const FittedModel model = fit_regression(spec, rows_of(sample, train, false), g,
                                             "fold " + std::to_string(f) + ", arm " + std::to_string(arm) + " pseudo-outcome");
    for (std::size_t i : folds.members(f)) out[i] = model.predict(sample.v_row(i));
  }
  return out;
}

OracleNoise oracle_noise_for(std::size_t n, double alpha, NoiseSharing sharing) {
  if (!(alpha > 0.0 && alpha <= 0.5)) throw ArgumentError("noise exponent alpha must lie in (0, 0.5]");
  if (n == 0) throw ArgumentError("noise scale needs a positive sample size");
  const double scale = std::pow(static_cast<double>(n), -alpha);
  return {scale, scale, sharing};
}

NuisanceFit oracle_noisy_nuisances(const CombinedSample& sample, const Dgp& dgp, double alpha,
                                   std::uint64_t seed, NoiseSharing sharing, double eps) {
  return oracle_nuisances(sample, dgp, oracle_noise_for(sample.n(), alpha, sharing), seed, eps);
}

NuisanceFit oracle_nuisances(const CombinedSample& sample, const Dgp& dgp, const OracleNoise& noise,
                             std::uint64_t seed, double eps) {
  validate_clip_eps(eps);
  if (sample.d() != dgp.d() || sample.v_index_map() != dgp.v_indices())
    throw ArgumentError("sample covariate layout does not match the data-generating process");
  const std::size_t n = sample.n();
  const bool v_is_x = sample.v_equals_x();

  // Streams: mu arm 0, mu arm 1, tau arm 0, tau arm 1, rho, pi.
  enum Stream { kMu0, kMu1, kTau0, kTau1, kRho, kPi, kStreams };
  std::vector<double> shared(kStreams);
  std::vector<Rng> streams;
  for (int s = 0; s < kStreams; ++s) streams.emplace_back(derive_seed(seed, {static_cast<std::uint64_t>(s)}));
  for (int s = 0; s < kStreams; ++s) shared[static_cast<std::size_t>(s)] = streams[static_cast<std::size_t>(s)].normal(noise.mean, noise.sd);
  auto draw = [&](int s) {
    if (noise.sharing == NoiseSharing::per_dataset) return shared[static_cast<std::size_t>(s)];
    return streams[static_cast<std::size_t>(s)].normal(noise.mean, noise.sd);
  };

  NuisanceFit fit = empty_fit(n, eps, true);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = sample.v_row(i);
    fit.rho[i] = clip_probability(expit(logit(dgp.rho(v)) + draw(kRho)), eps);
    fit.tau[0][i] = dgp.tau(0, v) + draw(kTau0);
    fit.tau[1][i] = dgp.tau(1, v) + draw(kTau1);
    fit.pa_v[i] = clip_probability(dgp.treat_prob_given_v(v), eps);
    if (has_x(sample, i, v_is_x)) {
      const auto x = sample.x_row(i);
      fit.pi1[i] = clip_probability(expit(logit(dgp.pi1(x)) + draw(kPi)), eps);
      fit.mu[0][i] = dgp.mu(0, x) + draw(kMu0);
      fit.mu[1][i] = dgp.mu(1, x) + draw(kMu1);
    }
  }
  fit.provenance = FitProvenance::oracle;
  fit.seed = seed;
  return fit;
}

}  // namespace transport
