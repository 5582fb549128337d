#pragma once

// Second-order (quadratic) estimators for the V = X case: series bases,
// weighted Gram matrices, the pairwise influence kernel and its U-statistic.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "transport/core_model.hpp"
#include "transport/nuisance.hpp"

namespace transport {

enum class BasisKind { histogram, cosine };

std::string_view to_string(BasisKind kind);
BasisKind parse_basis_kind(std::string_view text);

struct BasisSpec {
  BasisKind kind = BasisKind::cosine;
  std::size_t k = 1;
};

// Evaluates x -> b(x) in R^k. Histogram: one-hot indicators of an equal-mass
// grid (m cells per axis from training quantiles, k = m^d). Cosine: tensor
// products of {1, sqrt(2) cos(pi j t)} on empirical-CDF-transformed
// coordinates, ordered by total degree and then lexicographically.
class Basis {
 public:
  std::size_t k() const { return k_; }
  std::size_t d() const { return d_; }
  BasisKind kind() const { return kind_; }
  Eigen::VectorXd evaluate(std::span<const double> x) const;
  // Record ids of the sample the basis was learned from.
  const std::vector<std::size_t>& training_ids() const { return training_ids_; }
  // Cosine frequencies per basis function (empty for histogram).
  const std::vector<std::vector<int>>& frequencies() const { return freq_; }

 private:
  friend Basis build_basis(const BasisSpec&, const CombinedSample&);
  BasisKind kind_ = BasisKind::cosine;
  std::size_t k_ = 0, d_ = 0, m_ = 0;
  std::vector<std::vector<double>> cuts_;    // histogram: m - 1 cut points per axis
  std::vector<std::vector<double>> sorted_;  // cosine: sorted training values per axis
  std::vector<std::vector<int>> freq_;
  std::vector<std::size_t> training_ids_;
};

// Learns cut points / CDF maps from every record of `train` (V = X required).
Basis build_basis(const BasisSpec& spec, const CombinedSample& train);

struct GramMatrix {
  Eigen::MatrixXd omega;
  double lambda = 0.0;
  Eigen::MatrixXd inverse;  // (omega + lambda I)^{-1}
  std::vector<std::size_t> training_ids;
};

// Negative lambda selects the default 1e-8 trace(omega) / k.
GramMatrix gram_from_matrix(Eigen::MatrixXd omega, double lambda = -1.0);

// omega = (1/n_train) sum_i b(x_i) b(x_i)^T rho_hat(x_i) pi_hat_a(x_i) over every
// training record. `fit` is aligned with `train`.
GramMatrix estimate_gram(const Basis& basis, const NuisanceFit& fit, const CombinedSample& train, int arm,
                         double lambda = -1.0);

// Inputs of the first- and second-order influence terms for one record.
struct QrRecord {
  bool source = false;
  bool match = false;  // S = 1 and A = a
  double y = 0.0;
  double mu_hat = 0.0;
  double rho_hat = 1.0;
  double pi_hat = 1.0;
  Eigen::VectorXd b;
};

std::vector<QrRecord> qr_records(const CombinedSample& sample, const NuisanceFit& fit, const Basis& basis, int arm);

// phi_1 for generalization (psi_a) or transportation (eta_a = P(S = 0) theta_a).
double qr_first_order(const QrRecord& r, EstimandKind kind);
// phi_2(Z_1, Z_2) with the Gram inverse `m`.
double qr_kernel(const QrRecord& r1, const QrRecord& r2, const Eigen::MatrixXd& m, EstimandKind kind);

// (1 / (n (n - 1))) sum over ordered pairs i != j of kernel(i, j).
double u_statistic_bruteforce(std::size_t n, const std::function<double(std::size_t, std::size_t)>& kernel);
// Same statistic for the influence kernel by contraction:
// [(sum u_i b_i)^T M (sum w_j b_j) - sum u_i w_i b_i^T M b_i] / (n (n - 1)).
double qr_u_statistic(std::span<const QrRecord> records, const Eigen::MatrixXd& m, EstimandKind kind);

struct QrResult {
  EffectEstimate estimate;  // se from first-order influence values only
  double first_order = 0.0;  // P_n phi_1 (eta scale for transportation)
  double u_term = 0.0;       // U_n phi_2
  std::size_t k = 0;
};

// `sample` is the estimation fold; `fit` holds nuisance predictions for its
// records. The basis, the Gram matrix and (for single-split fits) the
// nuisances must come from records disjoint from `sample`.
QrResult qr_estimate(const CombinedSample& sample, const NuisanceFit& fit, const Basis& basis,
                     const GramMatrix& gram, int arm, EstimandKind kind);

// Exact expectations under a discrete law over records: E[phi_1] and the
// expectation of phi_2 over independent pairs.
struct ExactQrExpectation {
  double first_order = 0.0;
  double second_order = 0.0;
};
ExactQrExpectation qr_exact_expectation(std::span<const QrRecord> atoms, std::span<const double> probs,
                                        const Eigen::MatrixXd& m, EstimandKind kind);

// k = round(n^{2d / (d + 2 alpha + 2 beta)}) when smoothness is given, else round(sqrt(n)).
std::size_t default_basis_dimension(std::size_t n, std::size_t d, std::optional<double> alpha = std::nullopt,
                                    std::optional<double> beta = std::nullopt);

// Nuisance / Gram / estimation folds.
struct ThreeWaySplit {
  std::vector<std::size_t> nuisance, gram, estimation;
};
ThreeWaySplit three_way_split(std::size_t n, std::uint64_t seed);

// Weighted-L2 projection algebra on a finite support. `basis` has one row per
// support point, `weight` holds p(x) w(x) with w = rho pi_a.
namespace discrete {
Eigen::MatrixXd gram(const Eigen::MatrixXd& basis, const Eigen::VectorXd& weight);
// b^T omega_inv integral(b g w dF), evaluated at each support point.
Eigen::VectorXd project(const Eigen::MatrixXd& basis, const Eigen::VectorXd& weight, const Eigen::MatrixXd& omega_inv,
                        const Eigen::VectorXd& g);
double inner(const Eigen::VectorXd& weight, const Eigen::VectorXd& g1, const Eigen::VectorXd& g2);
double norm(const Eigen::VectorXd& weight, const Eigen::VectorXd& g);
double operator_norm(const Eigen::MatrixXd& m);
}  // namespace discrete

}  // namespace transport
