#pragma once

// Nuisance learners (propensity, participation, outcome and nested
// regressions), cross-fitted prediction, and noisy-oracle nuisances for
// simulation studies.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "transport/core_model.hpp"
#include "transport/dgp.hpp"

namespace transport {

enum class LearnerFamily { logistic, ridge, knn, constant };

struct LearnerSpec {
  LearnerFamily family = LearnerFamily::ridge;
  // L2 penalty on slopes (ridge and logistic); the intercept is never penalized.
  double lambda = 0.0;
  int k_nn = 10;
  int max_iter = 100;
  double tol = 1e-8;

  void validate() const;
};

std::string to_string(const LearnerSpec& spec);
// "<family> [key=value ...]", e.g. "ridge lambda=0.5" or "knn k=20".
LearnerSpec parse_learner_spec(std::string_view text);

class FittedModel {
 public:
  double predict(std::span<const double> row) const;
  std::vector<double> predict_rows(const Eigen::MatrixXd& rows) const;

  LearnerFamily family() const { return family_; }
  // Intercept first; empty for knn/constant.
  const Eigen::VectorXd& coefficients() const { return beta_; }
  int iterations() const { return iterations_; }
  // Sup-norm of the mean log-likelihood gradient at the returned iterate (logistic).
  double gradient_norm() const { return gradient_norm_; }

 private:
  friend FittedModel fit_learner(const LearnerSpec&, const Eigen::MatrixXd&, const Eigen::VectorXd&, bool);

  LearnerFamily family_ = LearnerFamily::constant;
  bool probability_ = false;
  Eigen::VectorXd beta_;
  double constant_ = 0.0;
  int iterations_ = 0;
  double gradient_norm_ = 0.0;
  // knn state: standardized training features (row-major) and responses.
  int k_nn_ = 1;
  std::vector<double> mean_, scale_, train_;
  std::vector<double> train_y_;
};

// Fit one learner. Rows of `features` are observations. For the logistic
// family `responses` must be 0/1. Probability learners predict within [0, 1].
FittedModel fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& features,
                        const Eigen::VectorXd& responses, bool is_probability);

enum class TauMode { regression, pseudo_outcome };

struct NuisanceSpecs {
  LearnerSpec pi{LearnerFamily::logistic};
  LearnerSpec rho{LearnerFamily::logistic};
  LearnerSpec mu0{LearnerFamily::ridge, 1e-6};
  LearnerSpec mu1{LearnerFamily::ridge, 1e-6};
  LearnerSpec tau0{LearnerFamily::ridge, 1e-6};
  LearnerSpec tau1{LearnerFamily::ridge, 1e-6};
  // P(A = 1 | V, S = 1), needed only for single-arm sensitivity bounds.
  std::optional<LearnerSpec> pa_v = LearnerSpec{LearnerFamily::logistic};
  TauMode tau_mode = TauMode::regression;

  const LearnerSpec& mu(int a) const { return a == 1 ? mu1 : mu0; }
  const LearnerSpec& tau(int a) const { return a == 1 ? tau1 : tau0; }
};

enum class FitProvenance { cross_fitted, single_split, oracle, supplied };

// Per-record nuisance evaluations aligned with CombinedSample indices.
// pi1 and mu cover source records, and every record when V = X; other entries
// are NaN. rho, tau and pa_v cover every record.
struct NuisanceFit {
  std::vector<double> pi1;
  std::array<std::vector<double>, 2> mu;
  std::vector<double> rho;
  std::array<std::vector<double>, 2> tau;
  std::vector<double> pa_v;  // empty when not fitted
  double eps = kDefaultClipEps;
  FitProvenance provenance = FitProvenance::supplied;
  std::optional<FoldAssignment> folds;
  // Record ids the nuisance models were trained on (single-split fits).
  std::vector<std::size_t> training_ids;
  std::uint64_t seed = 0;

  std::size_t size() const { return rho.size(); }
  double pi(int a, std::size_t i) const { return a == 1 ? pi1[i] : 1.0 - pi1[i]; }

  // Length and range checks: every probability in [eps, 1 - eps].
  void validate(const CombinedSample& sample) const;
};

// K-fold cross-fitting: every prediction for a record in fold f comes from
// models trained on records outside f. The nested regression for tau_a is fit
// on training-fold outcome predictions, so fold f never influences its own
// predictions.
NuisanceFit cross_fit_nuisances(const CombinedSample& sample, const NuisanceSpecs& specs,
                                const FoldAssignment& folds, double eps, std::uint64_t seed,
                                int workers = 1);

// Train every nuisance on the records at `train_indices` and predict all records.
NuisanceFit fit_single_split(const CombinedSample& sample, const NuisanceSpecs& specs,
                             std::span<const std::size_t> train_indices, double eps);

// I(A = a)(Y - mu_a)/pi_a + mu_a
double pseudo_outcome(int a_observed, double y, int arm, double mu_hat, double pi_hat);

// Regress the pseudo-outcome built from `fit` on V within the folds and return
// out-of-fold tau_a predictions for every record.
std::vector<double> pseudo_outcome_tau(const CombinedSample& sample, const NuisanceFit& fit,
                                       const LearnerSpec& spec, const FoldAssignment& folds, int arm);

enum class NoiseSharing { per_dataset, per_record };

struct OracleNoise {
  double mean = 0.0;
  double sd = 0.0;
  NoiseSharing sharing = NoiseSharing::per_dataset;
};

// N(n^-alpha, n^-2alpha) perturbations with n the sample size.
OracleNoise oracle_noise_for(std::size_t n, double alpha, NoiseSharing sharing = NoiseSharing::per_dataset);

// True nuisances perturbed as mu + e1, tau + e2, expit(logit(rho) + e3),
// expit(logit(pi_1) + e4). Independent draws per nuisance (and per arm for
// mu and tau); per-record draws when sharing == per_record.
NuisanceFit oracle_noisy_nuisances(const CombinedSample& sample, const Dgp& dgp, double alpha,
                                   std::uint64_t seed, NoiseSharing sharing = NoiseSharing::per_dataset,
                                   double eps = kDefaultClipEps);
NuisanceFit oracle_nuisances(const CombinedSample& sample, const Dgp& dgp, const OracleNoise& noise,
                             std::uint64_t seed, double eps = kDefaultClipEps);

}  // namespace transport
