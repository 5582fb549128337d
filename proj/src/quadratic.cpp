#include "transport/quadratic.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "transport/dr_estimators.hpp"
#include "transport/error.hpp"

namespace transport {
namespace {

// Type-7 sample quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::size_t integer_root(std::size_t k, std::size_t d) {
  auto m = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(k), 1.0 / static_cast<double>(d))));
  for (std::size_t cand : {m > 0 ? m - 1 : 0, m, m + 1}) {
    if (cand == 0) continue;
    std::size_t p = 1;
    for (std::size_t j = 0; j < d && p <= k; ++j) p *= cand;
    if (p == k) return cand;
  }
  return 0;
}

// Multi-indices with the given total degree, lexicographically ascending.
void enumerate_degree(std::size_t d, int total, std::vector<int>& prefix, std::vector<std::vector<int>>& out,
                      std::size_t limit) {
  if (out.size() >= limit) return;
  if (prefix.size() + 1 == d) {
    prefix.push_back(total);
    out.push_back(prefix);
    prefix.pop_back();
    return;
  }
  for (int j = 0; j <= total && out.size() < limit; ++j) {
    prefix.push_back(j);
    enumerate_degree(d, total - j, prefix, out, limit);
    prefix.pop_back();
  }
}

void check_disjoint(const std::vector<std::size_t>& used, const CombinedSample& sample, const char* what) {
  if (used.empty()) return;
  const std::unordered_set<std::size_t> ids(used.begin(), used.end());
  for (std::size_t id : sample.record_ids())
    if (ids.count(id))
      throw ProtocolError(std::string(what) + " was trained on record " + std::to_string(id) +
                          ", which is also in the estimation fold");
}

void require_v_equals_x(const CombinedSample& sample) {
  if (!sample.v_equals_x())
    throw UnsupportedConfiguration(
        "the quadratic estimator needs every covariate observed in the target (V = X); with V a strict subset of X "
        "the second-order correction involves cubic functionals that are not implemented");
}

// Kernel factors: phi_2(i, j) = u_i * b_i^T M b_j * w_j.
double kernel_u(const QrRecord& r, EstimandKind kind) {
  if (!r.match) return 0.0;
  const double resid = r.y - r.mu_hat;
  return kind == EstimandKind::generalization ? -resid : resid;
}

double kernel_w(const QrRecord& r, EstimandKind kind) {
  const double rp = r.rho_hat * r.pi_hat;
  if (kind == EstimandKind::generalization) return ((r.match ? 1.0 : 0.0) - rp) / rp;
  return ((r.source ? 0.0 : rp) - (1.0 - r.rho_hat) * (r.match ? 1.0 : 0.0)) / rp;
}

}  // namespace

std::string_view to_string(BasisKind kind) { return kind == BasisKind::histogram ? "histogram" : "cosine"; }

BasisKind parse_basis_kind(std::string_view text) {
  if (text == "histogram") return BasisKind::histogram;
  if (text == "cosine") return BasisKind::cosine;
  throw ArgumentError("unknown basis kind '" + std::string(text) + "' (expected histogram or cosine)");
}

Basis build_basis(const BasisSpec& spec, const CombinedSample& train) {
  require_v_equals_x(train);
  if (spec.k < 1) throw ArgumentError("basis dimension k must be >= 1");
  const std::size_t n = train.n();
  const std::size_t d = train.d();
  Basis b;
  b.kind_ = spec.kind;
  b.k_ = spec.k;
  b.d_ = d;
  b.training_ids_ = train.record_ids();

  std::vector<std::vector<double>> columns(d, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = train.x_row(i);
    for (std::size_t j = 0; j < d; ++j) columns[j][i] = x[j];
  }
  for (auto& c : columns) std::sort(c.begin(), c.end());

  if (spec.kind == BasisKind::histogram) {
    if (spec.k > n)
      throw ArgumentError("histogram basis with k = " + std::to_string(spec.k) + " cells exceeds the " +
                          std::to_string(n) + " training records; some cells would be empty");
    const std::size_t m = integer_root(spec.k, d);
    if (m == 0)
      throw ArgumentError("histogram basis needs k = m^d; k = " + std::to_string(spec.k) + " is not a power of d = " +
                          std::to_string(d));
    b.m_ = m;
    b.cuts_.resize(d);
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t c = 1; c < m; ++c)
        b.cuts_[j].push_back(quantile_sorted(columns[j], static_cast<double>(c) / static_cast<double>(m)));
  } else {
    b.sorted_ = std::move(columns);
    std::vector<int> prefix;
    for (int total = 0; b.freq_.size() < spec.k; ++total) enumerate_degree(d, total, prefix, b.freq_, spec.k);
  }
  return b;
}

Eigen::VectorXd Basis::evaluate(std::span<const double> x) const {
  if (x.size() != d_) throw ArgumentError("basis evaluated at a point of the wrong dimension");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k_));
  if (kind_ == BasisKind::histogram) {
    std::size_t cell = 0, stride = 1;
    for (std::size_t j = 0; j < d_; ++j) {
      const auto c = static_cast<std::size_t>(std::upper_bound(cuts_[j].begin(), cuts_[j].end(), x[j]) - cuts_[j].begin());
      cell += c * stride;
      stride *= m_;
    }
    out(static_cast<Eigen::Index>(cell)) = 1.0;
    return out;
  }
  // Per-axis cosine values for every frequency that occurs.
  int max_freq = 0;
  for (const auto& f : freq_)
    for (int v : f) max_freq = std::max(max_freq, v);
  std::vector<std::vector<double>> axis(d_, std::vector<double>(static_cast<std::size_t>(max_freq) + 1));
  for (std::size_t j = 0; j < d_; ++j) {
    const auto& s = sorted_[j];
    const double t = static_cast<double>(std::upper_bound(s.begin(), s.end(), x[j]) - s.begin()) / static_cast<double>(s.size());
    axis[j][0] = 1.0;
    for (int q = 1; q <= max_freq; ++q) axis[j][static_cast<std::size_t>(q)] = std::sqrt(2.0) * std::cos(M_PI * q * t);
  }
  for (std::size_t r = 0; r < k_; ++r) {
    double v = 1.0;
    for (std::size_t j = 0; j < d_; ++j) v *= axis[j][static_cast<std::size_t>(freq_[r][j])];
    out(static_cast<Eigen::Index>(r)) = v;
  }
  return out;
}

GramMatrix gram_from_matrix(Eigen::MatrixXd omega, double lambda) {
  if (omega.rows() != omega.cols() || omega.rows() == 0) throw ArgumentError("Gram matrix must be square and nonempty");
  if (!omega.allFinite()) throw DataError("Gram matrix has non-finite entries");
  omega = 0.5 * (omega + omega.transpose());
  const auto k = static_cast<double>(omega.rows());
  GramMatrix g;
  g.lambda = lambda >= 0.0 ? lambda : 1e-8 * omega.trace() / k;
  Eigen::MatrixXd reg = omega;
  reg.diagonal().array() += g.lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(ldlt.rcond() > 1e-15))
    throw NumericalError("Gram matrix is not positive definite after regularization");
  g.inverse = ldlt.solve(Eigen::MatrixXd::Identity(omega.rows(), omega.cols()));
  g.inverse = 0.5 * (g.inverse + g.inverse.transpose());
  g.omega = std::move(omega);
  return g;
}

GramMatrix estimate_gram(const Basis& basis, const NuisanceFit& fit, const CombinedSample& train, int arm,
                         double lambda) {
  require_v_equals_x(train);
  if (arm != 0 && arm != 1) throw ArgumentError("Gram matrix needs arm 0 or 1");
  if (fit.size() != train.n()) throw ArgumentError("nuisance fit does not match the Gram training sample");
  const auto k = static_cast<Eigen::Index>(basis.k());
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(k, k);
  for (std::size_t i = 0; i < train.n(); ++i) {
    const double w = fit.rho[i] * fit.pi(arm, i);
    if (!std::isfinite(w)) throw DataError("non-finite Gram weight at training record " + std::to_string(i));
    const Eigen::VectorXd b = basis.evaluate(train.x_row(i));
    omega.selfadjointView<Eigen::Lower>().rankUpdate(b, w);
  }
  omega = omega.selfadjointView<Eigen::Lower>();
  omega /= static_cast<double>(train.n());
  GramMatrix g = gram_from_matrix(std::move(omega), lambda);
  g.training_ids = train.record_ids();
  return g;
}

std::vector<QrRecord> qr_records(const CombinedSample& sample, const NuisanceFit& fit, const Basis& basis, int arm) {
  require_v_equals_x(sample);
  if (arm != 0 && arm != 1) throw ArgumentError("quadratic estimator needs arm 0 or 1");
  if (fit.size() != sample.n()) throw ArgumentError("nuisance fit does not match the estimation sample");
  std::vector<QrRecord> out(sample.n());
  for (std::size_t i = 0; i < sample.n(); ++i) {
    QrRecord& r = out[i];
    r.source = sample.is_source(i);
    r.match = r.source && sample.source()[i].a == arm;
    r.y = r.source ? sample.source()[i].y : 0.0;
    r.mu_hat = fit.mu[arm][i];
    r.rho_hat = fit.rho[i];
    r.pi_hat = fit.pi(arm, i);
    if (!std::isfinite(r.mu_hat) || !(r.rho_hat > 0.0) || !(r.pi_hat > 0.0))
      throw NumericalError("nuisance predictions missing or out of range at record " + std::to_string(i));
    r.b = basis.evaluate(sample.x_row(i));
  }
  return out;
}

double qr_first_order(const QrRecord& r, EstimandKind kind) {
  const double resid = r.match ? (r.y - r.mu_hat) / (r.rho_hat * r.pi_hat) : 0.0;
  if (kind == EstimandKind::generalization) return resid + r.mu_hat;
  return (1.0 - r.rho_hat) * resid + (r.source ? 0.0 : r.mu_hat);
}

double qr_kernel(const QrRecord& r1, const QrRecord& r2, const Eigen::MatrixXd& m, EstimandKind kind) {
  const double u = kernel_u(r1, kind);
  if (u == 0.0) return 0.0;
  return u * r1.b.dot(m * r2.b) * kernel_w(r2, kind);
}

double u_statistic_bruteforce(std::size_t n, const std::function<double(std::size_t, std::size_t)>& kernel) {
  if (n < 2) throw ArgumentError("a U-statistic needs at least 2 records");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) acc += kernel(i, j);
  return acc / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double qr_u_statistic(std::span<const QrRecord> records, const Eigen::MatrixXd& m, EstimandKind kind) {
  const std::size_t n = records.size();
  if (n < 2) throw ArgumentError("a U-statistic needs at least 2 records");
  const Eigen::Index k = m.rows();
  Eigen::VectorXd su = Eigen::VectorXd::Zero(k), sw = Eigen::VectorXd::Zero(k);
  double diag = 0.0;
  for (const auto& r : records) {
    const double u = kernel_u(r, kind);
    const double w = kernel_w(r, kind);
    sw.noalias() += w * r.b;
    if (u != 0.0) {
      su.noalias() += u * r.b;
      diag += u * w * r.b.dot(m * r.b);
    }
  }
  return (su.dot(m * sw) - diag) / (static_cast<double>(n) * static_cast<double>(n - 1));
}

QrResult qr_estimate(const CombinedSample& sample, const NuisanceFit& fit, const Basis& basis,
                     const GramMatrix& gram, int arm, EstimandKind kind) {
  require_v_equals_x(sample);
  check_disjoint(basis.training_ids(), sample, "the basis");
  check_disjoint(gram.training_ids, sample, "the Gram matrix");
  if (fit.provenance == FitProvenance::single_split) check_disjoint(fit.training_ids, sample, "the nuisance fit");
  if (static_cast<std::size_t>(gram.inverse.rows()) != basis.k()) throw ArgumentError("Gram matrix and basis dimensions differ");
  const std::size_t n = sample.n();
  if (n < 2 || static_cast<double>(basis.k()) >= static_cast<double>(n) * static_cast<double>(n - 1))
    throw ArgumentError("basis dimension k must be smaller than n(n - 1)");
  if (kind == EstimandKind::transportation && sample.n2() == 0)
    throw DataError("transportation estimates need at least one target record");
  bool arm_seen = sample.n1() == 0;
  for (const auto& r : sample.source()) arm_seen = arm_seen || r.a == arm;
  if (!arm_seen) throw DataError("no source record received treatment " + std::to_string(arm) + "; the arm is not estimable");

  const std::vector<QrRecord> records = qr_records(sample, fit, basis, arm);
  std::vector<double> phi1(n);
  double first = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    phi1[i] = qr_first_order(records[i], kind);
    first += phi1[i];
  }
  first /= static_cast<double>(n);
  const double u = qr_u_statistic(records, gram.inverse, kind);

  QrResult out;
  out.first_order = first;
  out.u_term = u;
  out.k = basis.k();
  double point = first + u;
  std::vector<double> centered(n);
  if (kind == EstimandKind::generalization) {
    for (std::size_t i = 0; i < n; ++i) centered[i] = phi1[i] - first;
  } else {
    const double p0 = static_cast<double>(sample.n2()) / static_cast<double>(n);
    point /= p0;
    const double theta_first = first / p0;
    for (std::size_t i = 0; i < n; ++i)
      centered[i] = (phi1[i] - theta_first * (sample.is_source(i) ? 0.0 : 1.0)) / p0;
  }
  const EstimandSpec spec{kind, arm == 1 ? Arm::treated : Arm::control};
  out.estimate = make_estimate(point, influence_se(centered), n, spec, Method::qr, true);
  return out;
}

ExactQrExpectation qr_exact_expectation(std::span<const QrRecord> atoms, std::span<const double> probs,
                                        const Eigen::MatrixXd& m, EstimandKind kind) {
  if (atoms.size() != probs.size()) throw ArgumentError("atoms and probabilities differ in length");
  ExactQrExpectation out;
  for (std::size_t i = 0; i < atoms.size(); ++i) out.first_order += probs[i] * qr_first_order(atoms[i], kind);
  for (std::size_t i = 0; i < atoms.size(); ++i)
    for (std::size_t j = 0; j < atoms.size(); ++j)
      out.second_order += probs[i] * probs[j] * qr_kernel(atoms[i], atoms[j], m, kind);
  return out;
}

std::size_t default_basis_dimension(std::size_t n, std::size_t d, std::optional<double> alpha,
                                    std::optional<double> beta) {
  if (n == 0) throw ArgumentError("basis dimension needs a positive sample size");
  double k = 0.0;
  if (alpha && beta) {
    if (!(*alpha > 0.0) || !(*beta > 0.0)) throw ArgumentError("smoothness exponents must be positive");
    const double dd = static_cast<double>(d);
    k = std::pow(static_cast<double>(n), 2.0 * dd / (dd + 2.0 * *alpha + 2.0 * *beta));
  } else {
    k = std::sqrt(static_cast<double>(n));
  }
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(k)));
}

ThreeWaySplit three_way_split(std::size_t n, std::uint64_t seed) {
  const FoldAssignment f = split_folds(n, 3, seed);
  return {f.members(0), f.members(1), f.members(2)};
}

namespace discrete {

Eigen::MatrixXd gram(const Eigen::MatrixXd& basis, const Eigen::VectorXd& weight) {
  return basis.transpose() * weight.asDiagonal() * basis;
}

Eigen::VectorXd project(const Eigen::MatrixXd& basis, const Eigen::VectorXd& weight, const Eigen::MatrixXd& omega_inv,
                        const Eigen::VectorXd& g) {
  return basis * (omega_inv * (basis.transpose() * weight.cwiseProduct(g)));
}

double inner(const Eigen::VectorXd& weight, const Eigen::VectorXd& g1, const Eigen::VectorXd& g2) {
  return (weight.array() * g1.array() * g2.array()).sum();
}

double norm(const Eigen::VectorXd& weight, const Eigen::VectorXd& g) { return std::sqrt(inner(weight, g, g)); }

double operator_norm(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

}  // namespace discrete

}  // namespace transport
