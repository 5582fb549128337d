#include "transport/dgp.hpp"

#include <cmath>

#include "transport/error.hpp"

namespace transport {

double expit(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

std::vector<double> Dgp::v_of(std::span<const double> x) const {
  std::vector<double> v;
  v.reserve(v_indices().size());
  for (std::size_t j : v_indices()) v.push_back(x[j]);
  return v;
}

bool Dgp::v_equals_x() const {
  const auto& idx = v_indices();
  if (idx.size() != d()) return false;
  for (std::size_t j = 0; j < idx.size(); ++j)
    if (idx[j] != j) return false;
  return true;
}

LinearGaussianDgp::LinearGaussianDgp(LinearGaussianDgpParams params) : p_(std::move(params)) {
  if (p_.d == 0) throw ArgumentError("DGP dimension must be positive");
  if (p_.pi_coef.empty()) p_.pi_coef.assign(p_.d, 0.0);
  for (auto& c : p_.mu_coef)
    if (c.empty()) c.assign(p_.d, 0.0);
  if (p_.pi_coef.size() != p_.d || p_.mu_coef[0].size() != p_.d || p_.mu_coef[1].size() != p_.d)
    throw ArgumentError("DGP coefficient vectors must have length d");
  if (!(p_.rho > 0.0 && p_.rho <= 1.0)) throw ArgumentError("DGP participation probability must be in (0, 1]");
  if (!(p_.noise_sd >= 0.0)) throw ArgumentError("DGP noise sd must be nonnegative");
  v_position_.assign(p_.d, -1);
  for (std::size_t k = 0; k < p_.v_indices.size(); ++k) {
    if (p_.v_indices[k] >= p_.d || v_position_[p_.v_indices[k]] != -1)
      throw ArgumentError("DGP V indices must be distinct columns of X");
    v_position_[p_.v_indices[k]] = static_cast<int>(k);
  }
}

void LinearGaussianDgp::draw_x(Rng& rng, std::span<double> x) const {
  for (double& v : x) v = rng.normal();
}

double LinearGaussianDgp::rho(std::span<const double>) const { return p_.rho; }

double LinearGaussianDgp::pi1(std::span<const double> x) const {
  double t = p_.pi_intercept;
  for (std::size_t j = 0; j < p_.d; ++j) t += p_.pi_coef[j] * x[j];
  return expit(t);
}

double LinearGaussianDgp::mu(int a, std::span<const double> x) const {
  double m = p_.mu_intercept[a];
  for (std::size_t j = 0; j < p_.d; ++j) m += p_.mu_coef[a][j] * x[j];
  return m;
}

double LinearGaussianDgp::outcome_sd(int, std::span<const double>) const { return p_.noise_sd; }

// Covariates outside V are independent standard normals, so they integrate out.
double LinearGaussianDgp::tau(int a, std::span<const double> v) const {
  double m = p_.mu_intercept[a];
  for (std::size_t j = 0; j < p_.d; ++j)
    if (v_position_[j] >= 0) m += p_.mu_coef[a][j] * v[static_cast<std::size_t>(v_position_[j])];
  return m;
}

double LinearGaussianDgp::mu_var_given_v(int a, std::span<const double>) const {
  double var = 0.0;
  for (std::size_t j = 0; j < p_.d; ++j)
    if (v_position_[j] < 0) var += p_.mu_coef[a][j] * p_.mu_coef[a][j];
  return var;
}

double LinearGaussianDgp::treat_prob_given_v(std::span<const double> v) const {
  double m = p_.pi_intercept;
  double var = 0.0;
  for (std::size_t j = 0; j < p_.d; ++j) {
    if (v_position_[j] >= 0) m += p_.pi_coef[j] * v[static_cast<std::size_t>(v_position_[j])];
    else var += p_.pi_coef[j] * p_.pi_coef[j];
  }
  if (var == 0.0) return expit(m);
  // E[expit(m + s Z)], Z ~ N(0, 1), by the trapezoid rule on [-10, 10].
  const double s = std::sqrt(var);
  constexpr int kPoints = 4000;
  constexpr double kLo = -10.0, kHi = 10.0;
  const double h = (kHi - kLo) / kPoints;
  double acc = 0.0;
  for (int i = 0; i <= kPoints; ++i) {
    const double z = kLo + h * i;
    const double w = (i == 0 || i == kPoints) ? 0.5 : 1.0;
    acc += w * expit(m + s * z) * std::exp(-0.5 * z * z);
  }
  return acc * h / std::sqrt(2.0 * M_PI);
}

double LinearGaussianDgp::psi(int a) const { return p_.mu_intercept[a]; }

double LinearGaussianDgp::theta(int a) const { return p_.mu_intercept[a]; }

std::shared_ptr<const LinearGaussianDgp> benchmark_dgp(bool v_equals_x) {
  LinearGaussianDgpParams p;
  p.d = 5;
  p.v_indices = v_equals_x ? std::vector<std::size_t>{0, 1, 2, 3, 4} : std::vector<std::size_t>{0, 1, 2};
  p.rho = 0.5;
  p.pi_intercept = 0.0;
  p.pi_coef = {0.3, 0.0, -0.3, 0.0, 0.0};
  p.mu_intercept[1] = 1.0;
  p.mu_coef[1] = {1.5, 0.0, 0.0, 1.0, 0.0};
  p.mu_intercept[0] = 0.0;
  p.mu_coef[0] = {1.0, 0.0, 0.0, 0.0, 0.0};
  p.noise_sd = 1.0;
  return std::make_shared<const LinearGaussianDgp>(std::move(p));
}

}  // namespace transport
