#pragma once

// Data-generating processes with analytically known nuisance functions.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "transport/rng.hpp"

namespace transport {

// A population law over (X, S, A, Y) where X ~ N(0, I_d), S depends on V only,
// A ~ Bernoulli(pi_1(X)) in the source, Y = mu_A(X) + noise.
class Dgp {
 public:
  virtual ~Dgp() = default;

  virtual std::size_t d() const = 0;
  virtual const std::vector<std::size_t>& v_indices() const = 0;

  virtual void draw_x(Rng& rng, std::span<double> x) const = 0;
  virtual double rho(std::span<const double> v) const = 0;  // P(S = 1 | V = v)
  virtual double pi1(std::span<const double> x) const = 0;  // P(A = 1 | X = x, S = 1)
  virtual double mu(int a, std::span<const double> x) const = 0;
  virtual double outcome_sd(int a, std::span<const double> x) const = 0;
  virtual double tau(int a, std::span<const double> v) const = 0;
  // Var(mu_a(X) | V = v, S = 1)
  virtual double mu_var_given_v(int a, std::span<const double> v) const = 0;
  // P(A = 1 | V = v, S = 1)
  virtual double treat_prob_given_v(std::span<const double> v) const = 0;

  virtual double psi(int a) const = 0;    // E[Y^a]
  virtual double theta(int a) const = 0;  // E[Y^a | S = 0]

  std::vector<double> v_of(std::span<const double> x) const;
  bool v_equals_x() const;
};

struct LinearGaussianDgpParams {
  std::size_t d = 5;
  std::vector<std::size_t> v_indices{0, 1, 2};
  double rho = 0.5;
  double pi_intercept = 0.0;
  std::vector<double> pi_coef;  // length d
  double mu_intercept[2] = {0.0, 0.0};
  std::vector<double> mu_coef[2];  // length d each
  double noise_sd = 1.0;
};

// Constant participation probability, logistic propensity, linear outcome
// means. Nested regressions and truths follow in closed form.
class LinearGaussianDgp final : public Dgp {
 public:
  explicit LinearGaussianDgp(LinearGaussianDgpParams params);

  std::size_t d() const override { return p_.d; }
  const std::vector<std::size_t>& v_indices() const override { return p_.v_indices; }
  void draw_x(Rng& rng, std::span<double> x) const override;
  double rho(std::span<const double> v) const override;
  double pi1(std::span<const double> x) const override;
  double mu(int a, std::span<const double> x) const override;
  double outcome_sd(int a, std::span<const double> x) const override;
  double tau(int a, std::span<const double> v) const override;
  double mu_var_given_v(int a, std::span<const double> v) const override;
  double treat_prob_given_v(std::span<const double> v) const override;
  double psi(int a) const override;
  double theta(int a) const override;

  const LinearGaussianDgpParams& params() const { return p_; }

 private:
  LinearGaussianDgpParams p_;
  std::vector<int> v_position_;  // X column -> V position or -1
};

// X ~ N(0, I_5), V = (X1, X2, X3), rho = 0.5, pi_1 = expit(0.3 x1 - 0.3 x3),
// mu_1 = 1.5 x1 + x4 + 1, mu_0 = x1, unit outcome noise. With v_equals_x the
// target keeps all five covariates.
std::shared_ptr<const LinearGaussianDgp> benchmark_dgp(bool v_equals_x = false);

double expit(double t);
double logit(double p);

}  // namespace transport
