#pragma once

// Synthetic data from a known law, the RMSE-versus-alpha study, the qr/dr
// comparison grid and exact identification checks on discrete laws.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "transport/core_model.hpp"
#include "transport/dgp.hpp"
#include "transport/nuisance.hpp"
#include "transport/quadratic.hpp"

namespace transport {

struct Truth {
  std::array<double, 2> psi{};    // E[Y^a]
  std::array<double, 2> theta{};  // E[Y^a | S = 0]
  double value(EstimandKind kind, Arm arm) const;
};

struct SimulatedData {
  CombinedSample sample;
  Truth truth;
};

// X ~ dgp, S ~ Bernoulli(rho(V)); source rows get A ~ Bernoulli(pi_1(X)) and
// Y = mu_A(X) + noise, target rows keep V only. Record ids start at id_offset.
SimulatedData simulate_dgp(std::size_t n, std::uint64_t seed, const Dgp& dgp, std::size_t id_offset = 0);
SimulatedData simulate_dgp(std::size_t n, std::uint64_t seed);  // benchmark law

struct RmseStudyConfig {
  std::vector<std::size_t> n_grid{100, 1000, 5000};
  std::vector<double> alpha_grid{0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
  int reps = 1000;
  std::uint64_t seed = 1;
  std::vector<Method> estimators{Method::plugin, Method::dr};
  int workers = 1;
  std::shared_ptr<const Dgp> dgp;  // benchmark law when null
  NoiseSharing sharing = NoiseSharing::per_dataset;
  double eps = kDefaultClipEps;
  EstimandSpec spec{EstimandKind::transportation, Arm::treated};
  std::optional<std::size_t> k_basis;  // qr only; round(sqrt(n)) when unset
  BasisKind basis = BasisKind::cosine;
};

struct RmseRow {
  Method estimator = Method::dr;
  std::size_t n = 0;
  double alpha = 0.0;
  double rmse = 0.0;
  double bias = 0.0;
  double mc_se = 0.0;  // Monte Carlo standard error of the bias
  int reps = 0;
};

struct RmseTable {
  std::vector<RmseRow> rows;
  const RmseRow* find(Method estimator, std::size_t n, double alpha) const;
};

RmseTable rmse_study(const RmseStudyConfig& config);
Method parse_estimator_tag(std::string_view tag);

// Finite-support joint law over (X, S, A, Y^0, Y^1). Observed Y = Y^A.
struct DiscreteAtom {
  std::vector<double> x;
  int s = 1;
  int a = 0;
  double y0 = 0.0;
  double y1 = 0.0;
  double prob = 0.0;
};

struct DiscreteLaw {
  std::vector<DiscreteAtom> atoms;
  std::vector<std::size_t> v_index_map;
};

struct IdentificationResult {
  double lhs = 0.0;  // potential-outcome mean
  double rhs = 0.0;  // nested-expectation formula from the observed law
  double gap = 0.0;
};

// Throws ArgumentError naming the cell when a positivity condition fails.
IdentificationResult identification_oracle(const DiscreteLaw& law, int arm, EstimandKind kind);

struct QuadraticCompareConfig {
  std::vector<std::size_t> n_grid{500, 1000};
  std::vector<std::size_t> k_grid{10, 50, 200};
  std::vector<double> alpha_grid{0.25};
  int reps = 200;
  std::uint64_t seed = 1;
  int workers = 1;
  BasisKind basis = BasisKind::cosine;
  EstimandSpec spec{EstimandKind::transportation, Arm::treated};
  NoiseSharing sharing = NoiseSharing::per_dataset;
  double eps = kDefaultClipEps;
  // Hold the nuisance perturbation and the basis/Gram training sample fixed
  // across replications (conditional variance given the training data).
  bool fix_nuisances = false;
  std::shared_ptr<const Dgp> dgp;  // V = X benchmark law when null
};

struct QuadraticCompareRow {
  Method method = Method::dr;
  std::size_t n = 0;
  std::size_t k = 0;
  double alpha = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double var = 0.0;
};

// "dr" is the first-order term P_n phi_1 (the V = X doubly robust estimator),
// "qr" adds the U-statistic correction.
std::vector<QuadraticCompareRow> quadratic_compare(const QuadraticCompareConfig& config);

}  // namespace transport
