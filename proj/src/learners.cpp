#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "transport/config.hpp"
#include "transport/error.hpp"
#include "transport/kernels.hpp"
#include "transport/nuisance.hpp"

namespace transport {
namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd g(x.rows(), x.cols() + 1);
  g.col(0).setOnes();
  g.rightCols(x.cols()) = x;
  return g;
}

Eigen::VectorXd penalty_diagonal(Eigen::Index p, double lambda) {
  Eigen::VectorXd d = Eigen::VectorXd::Constant(p, lambda);
  d(0) = 0.0;
  return d;
}

std::string_view family_name(LearnerFamily f) {
  switch (f) {
    case LearnerFamily::logistic: return "logistic";
    case LearnerFamily::ridge: return "ridge";
    case LearnerFamily::knn: return "knn";
    case LearnerFamily::constant: return "constant";
  }
  return "constant";
}

double parse_number(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw ConfigError("learner parameter " + key + " has non-numeric value '" + value + "'");
  return out;
}

double log1pexp(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda, Eigen::VectorXd& beta) {
  const Eigen::MatrixXd g = with_intercept(x);
  Eigen::MatrixXd normal = g.transpose() * g;
  normal.diagonal() += penalty_diagonal(g.cols(), lambda);
  const Eigen::VectorXd rhs = g.transpose() * y;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  // rcond() alone misses exactly zero pivots, which LDLT solves around silently.
  const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-13) || !(pivots.minCoeff() > 1e-13 * pivots.maxCoeff()))
    throw NumericalError("ridge normal equations are singular; use a positive ridge penalty (lambda > 0)");
  beta = ldlt.solve(rhs);
  if (!beta.allFinite()) throw NumericalError("ridge solution is not finite; use a positive ridge penalty (lambda > 0)");
}

// Newton-Raphson on the mean penalized log-likelihood with step halving.
void fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LearnerSpec& spec,
                  Eigen::VectorXd& beta, int& iterations, double& grad_norm) {
  const Eigen::MatrixXd g = with_intercept(x);
  const auto n = static_cast<double>(g.rows());
  const Eigen::VectorXd pen = penalty_diagonal(g.cols(), spec.lambda);
  beta = Eigen::VectorXd::Zero(g.cols());

  auto objective = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = g * b;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - log1pexp(eta(i));
    return (ll - 0.5 * b.dot(pen.asDiagonal() * b)) / n;
  };
  auto gradient = [&](const Eigen::VectorXd& b, Eigen::VectorXd& p) {
    const Eigen::VectorXd eta = g * b;
    p.resize(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) p(i) = sigmoid(eta(i));
    return Eigen::VectorXd((g.transpose() * (y - p) - pen.cwiseProduct(b)) / n);
  };

  Eigen::VectorXd p;
  Eigen::VectorXd grad = gradient(beta, p);
  double obj = objective(beta);
  iterations = 0;
  grad_norm = grad.lpNorm<Eigen::Infinity>();
  while (grad_norm > spec.tol) {
    if (iterations >= spec.max_iter)
      throw ConvergenceError("IRLS did not converge in " + std::to_string(spec.max_iter) +
                                 " iterations (gradient sup-norm " + std::to_string(grad_norm) + ")",
                             std::vector<double>(beta.data(), beta.data() + beta.size()));
    Eigen::VectorXd w(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) w(i) = p(i) * (1.0 - p(i));
    Eigen::MatrixXd hess = g.transpose() * w.asDiagonal() * g;
    hess.diagonal() += pen;
    hess /= n;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd step = ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite())
      throw ConvergenceError("IRLS Hessian is singular (separated or collinear data)",
                             std::vector<double>(beta.data(), beta.data() + beta.size()));
    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double cand_obj = objective(candidate);
    for (int halving = 0; halving < 40 && !(cand_obj >= obj); ++halving) {
      scale *= 0.5;
      candidate = beta + scale * step;
      cand_obj = objective(candidate);
    }
    if (!(cand_obj >= obj)) {
      // No ascent possible along the Newton direction: we are at numerical precision.
      ++iterations;
      break;
    }
    beta = candidate;
    obj = cand_obj;
    grad = gradient(beta, p);
    grad_norm = grad.lpNorm<Eigen::Infinity>();
    ++iterations;
  }
  if (grad_norm > spec.tol)
    throw ConvergenceError("IRLS stalled with gradient sup-norm " + std::to_string(grad_norm),
                           std::vector<double>(beta.data(), beta.data() + beta.size()));
}

}  // namespace

void LearnerSpec::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("learner penalty lambda must be >= 0");
  if (k_nn < 1) throw ArgumentError("knn neighbour count must be >= 1");
  if (max_iter < 1) throw ArgumentError("IRLS max_iter must be >= 1");
  if (!(tol > 0.0)) throw ArgumentError("IRLS tolerance must be positive");
}

std::string to_string(const LearnerSpec& spec) {
  std::string out(family_name(spec.family));
  switch (spec.family) {
    case LearnerFamily::ridge: out += " lambda=" + format_double(spec.lambda); break;
    case LearnerFamily::logistic:
      out += " lambda=" + format_double(spec.lambda) + " max_iter=" + std::to_string(spec.max_iter) +
             " tol=" + format_double(spec.tol);
      break;
    case LearnerFamily::knn: out += " k=" + std::to_string(spec.k_nn); break;
    case LearnerFamily::constant: break;
  }
  return out;
}

LearnerSpec parse_learner_spec(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string family;
  in >> family;
  LearnerSpec spec;
  if (family == "logistic") spec.family = LearnerFamily::logistic;
  else if (family == "ridge") spec.family = LearnerFamily::ridge;
  else if (family == "knn") spec.family = LearnerFamily::knn;
  else if (family == "constant") spec.family = LearnerFamily::constant;
  else throw ConfigError("unknown learner family '" + family + "' (expected logistic, ridge, knn or constant)");
  for (std::string token; in >> token;) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw ConfigError("learner parameter '" + token + "' is not key=value");
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    const double number = parse_number(key, value);
    if (key == "lambda") spec.lambda = number;
    else if (key == "k") spec.k_nn = static_cast<int>(number);
    else if (key == "max_iter") spec.max_iter = static_cast<int>(number);
    else if (key == "tol") spec.tol = number;
    else throw ConfigError("unknown learner parameter '" + key + "'");
  }
  spec.validate();
  return spec;
}

FittedModel fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& features,
                        const Eigen::VectorXd& responses, bool is_probability) {
  spec.validate();
  if (features.rows() != responses.size())
    throw ArgumentError("feature rows and responses differ in length");
  if (responses.size() < 2) throw DataError("a learner needs at least 2 training observations");
  if (!features.allFinite() || !responses.allFinite()) throw DataError("learner inputs contain non-finite values");

  FittedModel m;
  m.family_ = spec.family;
  m.probability_ = is_probability;
  switch (spec.family) {
    case LearnerFamily::constant:
      m.constant_ = responses.mean();
      break;
    case LearnerFamily::ridge:
      fit_ridge(features, responses, spec.lambda, m.beta_);
      break;
    case LearnerFamily::logistic:
      for (Eigen::Index i = 0; i < responses.size(); ++i)
        if (responses(i) != 0.0 && responses(i) != 1.0)
          throw DataError("logistic learner needs 0/1 responses");
      fit_logistic(features, responses, spec, m.beta_, m.iterations_, m.gradient_norm_);
      break;
    case LearnerFamily::knn: {
      const auto n = static_cast<std::size_t>(features.rows());
      const auto p = static_cast<std::size_t>(features.cols());
      m.k_nn_ = std::min<int>(spec.k_nn, static_cast<int>(n));
      m.mean_.resize(p);
      m.scale_.resize(p);
      for (std::size_t j = 0; j < p; ++j) {
        const auto col = features.col(static_cast<Eigen::Index>(j));
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / static_cast<double>(n);
        m.mean_[j] = mean;
        m.scale_[j] = var > 0.0 ? std::sqrt(var) : 1.0;
      }
      m.train_.resize(n * p);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j)
          m.train_[i * p + j] = (features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - m.mean_[j]) / m.scale_[j];
      m.train_y_.assign(responses.data(), responses.data() + n);
      break;
    }
  }
  return m;
}

double FittedModel::predict(std::span<const double> row) const {
  double value = 0.0;
  switch (family_) {
    case LearnerFamily::constant:
      value = constant_;
      break;
    case LearnerFamily::ridge:
    case LearnerFamily::logistic: {
      double eta = beta_(0);
      for (std::size_t j = 0; j < row.size(); ++j) eta += beta_(static_cast<Eigen::Index>(j + 1)) * row[j];
      value = family_ == LearnerFamily::logistic ? sigmoid(eta) : eta;
      break;
    }
    case LearnerFamily::knn: {
      const std::size_t p = mean_.size();
      std::vector<double> query(p);
      for (std::size_t j = 0; j < p; ++j) query[j] = (row[j] - mean_[j]) / scale_[j];
      std::vector<double> dist(train_y_.size());
      kernels::squared_distances(query, train_, p, dist);
      std::vector<std::size_t> order(dist.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      const auto k = static_cast<std::size_t>(k_nn_);
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(),
                       [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += train_y_[order[i]];
      value = s / static_cast<double>(k);
      break;
    }
  }
  if (probability_ && family_ != LearnerFamily::logistic) value = std::clamp(value, 0.0, 1.0);
  return value;
}

std::vector<double> FittedModel::predict_rows(const Eigen::MatrixXd& rows) const {
  std::vector<double> out(static_cast<std::size_t>(rows.rows()));
  std::vector<double> row(static_cast<std::size_t>(rows.cols()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) row[static_cast<std::size_t>(j)] = rows(i, j);
    out[static_cast<std::size_t>(i)] = predict(row);
  }
  return out;
}

}  // namespace transport
