#include "transport/simulation.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "transport/dr_estimators.hpp"
#include "transport/error.hpp"
#include "transport/parallel.hpp"
#include "transport/rng.hpp"

namespace transport {
namespace {

struct ErrorSummary {
  double rmse = 0.0, bias = 0.0, mc_se = 0.0, var = 0.0;
};

ErrorSummary summarize(const std::vector<double>& errors) {
  const auto r = static_cast<double>(errors.size());
  ErrorSummary s;
  double sq = 0.0;
  for (double e : errors) {
    s.bias += e;
    sq += e * e;
  }
  s.bias /= r;
  s.rmse = std::sqrt(sq / r);
  if (errors.size() > 1) {
    double ss = 0.0;
    for (double e : errors) ss += (e - s.bias) * (e - s.bias);
    s.var = ss / (r - 1.0);
    s.mc_se = std::sqrt(s.var / r);
  }
  return s;
}

std::string describe_x(const std::vector<double>& x) {
  std::ostringstream out;
  out << '(';
  for (std::size_t j = 0; j < x.size(); ++j) out << (j ? ", " : "") << x[j];
  out << ')';
  return out.str();
}

std::vector<double> v_of(const std::vector<double>& x, const std::vector<std::size_t>& map) {
  std::vector<double> v;
  for (std::size_t j : map) v.push_back(x.at(j));
  return v;
}

}  // namespace

double Truth::value(EstimandKind kind, Arm arm) const {
  const auto& t = kind == EstimandKind::generalization ? psi : theta;
  if (arm == Arm::contrast) return t[1] - t[0];
  return t[static_cast<std::size_t>(arm_value(arm))];
}

SimulatedData simulate_dgp(std::size_t n, std::uint64_t seed, const Dgp& dgp, std::size_t id_offset) {
  if (n < 10) throw ArgumentError("simulation needs n >= 10 records");
  Rng rng(seed);
  std::vector<SourceRecord> source;
  std::vector<TargetRecord> target;
  std::vector<double> x(dgp.d());
  for (std::size_t i = 0; i < n; ++i) {
    dgp.draw_x(rng, x);
    const auto v = dgp.v_of(x);
    const int s = rng.bernoulli(dgp.rho(v));
    if (s == 1) {
      const int a = rng.bernoulli(dgp.pi1(x));
      const double y = dgp.mu(a, x) + dgp.outcome_sd(a, x) * rng.normal();
      source.push_back({x, a, y});
    } else {
      target.push_back({v, std::nullopt});
    }
  }
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = id_offset + i;
  SimulatedData out{CombinedSample(std::move(source), std::move(target), dgp.v_indices(), std::move(ids)), {}};
  for (int a = 0; a < 2; ++a) {
    out.truth.psi[static_cast<std::size_t>(a)] = dgp.psi(a);
    out.truth.theta[static_cast<std::size_t>(a)] = dgp.theta(a);
  }
  return out;
}

SimulatedData simulate_dgp(std::size_t n, std::uint64_t seed) { return simulate_dgp(n, seed, *benchmark_dgp()); }

const RmseRow* RmseTable::find(Method estimator, std::size_t n, double alpha) const {
  for (const auto& r : rows)
    if (r.estimator == estimator && r.n == n && std::fabs(r.alpha - alpha) < 1e-12) return &r;
  return nullptr;
}

Method parse_estimator_tag(std::string_view tag) { return parse_method(tag); }

RmseTable rmse_study(const RmseStudyConfig& config) {
  if (config.n_grid.empty() || config.alpha_grid.empty()) throw ArgumentError("n and alpha grids must be nonempty");
  if (config.reps < 1) throw ArgumentError("replications must be >= 1");
  if (config.estimators.empty()) throw ArgumentError("no estimators requested");
  const bool want_qr = std::find(config.estimators.begin(), config.estimators.end(), Method::qr) != config.estimators.end();
  std::shared_ptr<const Dgp> dgp = config.dgp ? config.dgp : std::shared_ptr<const Dgp>(benchmark_dgp(want_qr));
  if (want_qr && !dgp->v_equals_x())
    throw UnsupportedConfiguration("the qr estimator needs a data-generating process with V = X");
  for (double a : config.alpha_grid) (void)oracle_noise_for(1, a);  // validates the range

  const std::size_t cells = config.n_grid.size() * config.alpha_grid.size();
  const auto reps = static_cast<std::size_t>(config.reps);
  const std::size_t n_est = config.estimators.size();

  auto errors = parallel_map(cells * reps, config.workers, [&](std::size_t task) {
    const std::size_t cell = task / reps;
    const std::size_t rep = task % reps;
    const std::size_t ni = cell / config.alpha_grid.size();
    const std::size_t ai = cell % config.alpha_grid.size();
    const std::size_t n = config.n_grid[ni];
    const double alpha = config.alpha_grid[ai];
    const std::uint64_t rep_seed = derive_seed(config.seed, {ni, ai, rep});

    const SimulatedData data = simulate_dgp(n, derive_seed(rep_seed, {0}), *dgp);
    const NuisanceFit fit = oracle_noisy_nuisances(data.sample, *dgp, alpha, derive_seed(rep_seed, {1}), config.sharing, config.eps);
    const double truth = data.truth.value(config.spec.kind, config.spec.arm);
    std::vector<double> err(n_est);
    for (std::size_t e = 0; e < n_est; ++e) {
      double point = 0.0;
      switch (config.estimators[e]) {
        case Method::plugin: point = plugin_estimate(data.sample, fit, config.spec.arm, config.spec.kind).point; break;
        case Method::dr: point = dr_estimate(data.sample, fit, config.spec.arm, config.spec.kind).point; break;
        case Method::qr: {
          if (config.spec.arm == Arm::contrast) throw ArgumentError("the qr estimator is defined per arm");
          const int arm = arm_value(config.spec.arm);
          const SimulatedData train = simulate_dgp(n, derive_seed(rep_seed, {2}), *dgp, n);
          const NuisanceFit train_fit =
              oracle_noisy_nuisances(train.sample, *dgp, alpha, derive_seed(rep_seed, {1}), config.sharing, config.eps);
          const std::size_t k = config.k_basis ? *config.k_basis : default_basis_dimension(n, dgp->d());
          const Basis basis = build_basis({config.basis, k}, train.sample);
          const GramMatrix gram = estimate_gram(basis, train_fit, train.sample, arm);
          point = qr_estimate(data.sample, fit, basis, gram, arm, config.spec.kind).estimate.point;
          break;
        }
      }
      err[e] = point - truth;
    }
    return err;
  });

  RmseTable table;
  for (std::size_t ni = 0; ni < config.n_grid.size(); ++ni) {
    for (std::size_t ai = 0; ai < config.alpha_grid.size(); ++ai) {
      const std::size_t cell = ni * config.alpha_grid.size() + ai;
      for (std::size_t e = 0; e < n_est; ++e) {
        std::vector<double> errs(reps);
        for (std::size_t r = 0; r < reps; ++r) errs[r] = errors[cell * reps + r][e];
        const ErrorSummary s = summarize(errs);
        table.rows.push_back({config.estimators[e], config.n_grid[ni], config.alpha_grid[ai], s.rmse, s.bias, s.mc_se, config.reps});
      }
    }
  }
  return table;
}

IdentificationResult identification_oracle(const DiscreteLaw& law, int arm, EstimandKind kind) {
  if (arm != 0 && arm != 1) throw ArgumentError("identification check needs arm 0 or 1");
  if (law.atoms.empty()) throw ArgumentError("discrete law has no atoms");
  double total = 0.0;
  for (const auto& at : law.atoms) {
    if (!(at.prob >= 0.0)) throw ArgumentError("discrete law has a negative probability");
    if ((at.s != 0 && at.s != 1) || (at.a != 0 && at.a != 1)) throw ArgumentError("S and A must be 0/1");
    total += at.prob;
  }
  if (std::fabs(total - 1.0) > 1e-12) throw ArgumentError("discrete law probabilities must sum to 1");

  auto y_arm = [arm](const DiscreteAtom& at) { return arm == 1 ? at.y1 : at.y0; };

  // Left side: potential-outcome mean in the whole or the target population.
  double lhs_num = 0.0, lhs_den = 0.0;
  for (const auto& at : law.atoms) {
    if (kind == EstimandKind::transportation && at.s != 0) continue;
    lhs_num += at.prob * y_arm(at);
    lhs_den += at.prob;
  }
  if (!(lhs_den > 0.0)) throw ArgumentError("the target population has zero mass");

  // Observed-data law: mu_a(x) = E[Y | X = x, A = a, S = 1].
  std::map<std::vector<double>, std::pair<double, double>> mu;  // x -> (sum p y, sum p) over S = 1, A = a
  std::map<std::vector<double>, double> source_mass;            // x -> P(X = x, S = 1)
  for (const auto& at : law.atoms) {
    if (at.s != 1) continue;
    source_mass[at.x] += at.prob;
    if (at.a == arm) {
      auto& m = mu[at.x];
      m.first += at.prob * (at.a == 1 ? at.y1 : at.y0);  // observed Y = Y^A
      m.second += at.prob;
    }
  }
  for (const auto& [x, mass] : source_mass) {
    if (mass <= 0.0) continue;
    const auto it = mu.find(x);
    if (it == mu.end() || !(it->second.second > 0.0))
      throw ArgumentError("positivity violated: P(A = " + std::to_string(arm) + " | X = " + describe_x(x) +
                          ", S = 1) = 0");
  }

  // tau_a(v) = E[mu_a(X) | V = v, S = 1].
  std::map<std::vector<double>, std::pair<double, double>> tau;
  for (const auto& [x, mass] : source_mass) {
    if (mass <= 0.0) continue;
    const auto& m = mu.at(x);
    auto& t = tau[v_of(x, law.v_index_map)];
    t.first += mass * (m.first / m.second);
    t.second += mass;
  }

  // Outer expectation over V (whole population or S = 0).
  std::map<std::vector<double>, double> v_mass;
  for (const auto& at : law.atoms) {
    if (at.prob <= 0.0) continue;
    if (kind == EstimandKind::transportation && at.s != 0) continue;
    v_mass[v_of(at.x, law.v_index_map)] += at.prob;
  }
  double rhs = 0.0;
  for (const auto& [v, mass] : v_mass) {
    const auto it = tau.find(v);
    if (it == tau.end() || !(it->second.second > 0.0))
      throw ArgumentError("positivity violated: P(S = 1 | V = " + describe_x(v) + ") = 0");
    rhs += mass * (it->second.first / it->second.second);
  }
  rhs /= lhs_den;

  IdentificationResult out;
  out.lhs = lhs_num / lhs_den;
  out.rhs = rhs;
  out.gap = std::fabs(out.lhs - out.rhs);
  return out;
}

std::vector<QuadraticCompareRow> quadratic_compare(const QuadraticCompareConfig& config) {
  if (config.n_grid.empty() || config.k_grid.empty() || config.alpha_grid.empty())
    throw ArgumentError("n, k and alpha grids must be nonempty");
  if (config.reps < 2) throw ArgumentError("quadratic comparison needs at least 2 replications");
  if (config.spec.arm == Arm::contrast) throw ArgumentError("the quadratic comparison is defined per arm");
  std::shared_ptr<const Dgp> dgp = config.dgp ? config.dgp : std::shared_ptr<const Dgp>(benchmark_dgp(true));
  if (!dgp->v_equals_x()) throw UnsupportedConfiguration("the quadratic comparison needs a data-generating process with V = X");
  for (double a : config.alpha_grid) (void)oracle_noise_for(1, a);
  const int arm = arm_value(config.spec.arm);
  const double truth = config.spec.kind == EstimandKind::generalization ? dgp->psi(arm) : dgp->theta(arm);

  const std::size_t nn = config.n_grid.size(), nk = config.k_grid.size(), na = config.alpha_grid.size();
  const std::size_t cells = nn * nk * na;
  const auto reps = static_cast<std::size_t>(config.reps);

  auto points = parallel_map(cells * reps, config.workers, [&](std::size_t task) {
    const std::size_t cell = task / reps;
    const std::size_t rep = task % reps;
    const std::size_t ni = cell / (nk * na);
    const std::size_t ki = (cell / na) % nk;
    const std::size_t ai = cell % na;
    const std::size_t n = config.n_grid[ni];
    const std::size_t k = config.k_grid[ki];
    const double alpha = config.alpha_grid[ai];
    const std::uint64_t rep_seed = derive_seed(config.seed, {ni, ki, ai, rep});
    // Training quantities depend on the replication unless they are held fixed.
    const std::uint64_t train_seed = config.fix_nuisances ? derive_seed(config.seed, {ni, ki, ai, 0xF1ED}) : rep_seed;

    const SimulatedData data = simulate_dgp(n, derive_seed(rep_seed, {0}), *dgp);
    const SimulatedData train = simulate_dgp(n, derive_seed(train_seed, {2}), *dgp, n);
    const std::uint64_t noise_seed = derive_seed(train_seed, {1});
    const NuisanceFit fit = oracle_noisy_nuisances(data.sample, *dgp, alpha, noise_seed, config.sharing, config.eps);
    const NuisanceFit train_fit = oracle_noisy_nuisances(train.sample, *dgp, alpha, noise_seed, config.sharing, config.eps);
    const Basis basis = build_basis({config.basis, k}, train.sample);
    const GramMatrix gram = estimate_gram(basis, train_fit, train.sample, arm);
    const QrResult r = qr_estimate(data.sample, fit, basis, gram, arm, config.spec.kind);
    double dr = r.first_order;
    if (config.spec.kind == EstimandKind::transportation)
      dr /= static_cast<double>(data.sample.n2()) / static_cast<double>(data.sample.n());
    return std::array<double, 2>{dr, r.estimate.point};
  });

  std::vector<QuadraticCompareRow> rows;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::size_t ni = cell / (nk * na);
    const std::size_t ki = (cell / na) % nk;
    const std::size_t ai = cell % na;
    for (int m = 0; m < 2; ++m) {
      std::vector<double> errs(reps);
      for (std::size_t r = 0; r < reps; ++r) errs[r] = points[cell * reps + r][static_cast<std::size_t>(m)] - truth;
      const ErrorSummary s = summarize(errs);
      rows.push_back({m == 0 ? Method::dr : Method::qr, config.n_grid[ni], config.k_grid[ki], config.alpha_grid[ai], s.bias,
                      s.rmse, s.var});
    }
  }
  return rows;
}

}  // namespace transport
