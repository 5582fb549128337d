#include "transport/kernels.hpp"

namespace transport::kernels::scalar {

double sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double sum_squared_deviation(std::span<const double> x, double center) {
  double s = 0.0;
  for (double v : x) {
    const double d = v - center;
    s += d * d;
  }
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void squared_distances(std::span<const double> query, std::span<const double> rows,
                       std::size_t dim, std::span<double> out) {
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* row = rows.data() + r * dim;
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = query[j] - row[j];
      s += d * d;
    }
    out[r] = s;
  }
}

void influence_generalization(const InfluenceInputs& in, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double ipw = in.match[i] * (in.y[i] - in.mu[i]) / (in.rho[i] * in.pi[i]);
    const double bridge = in.source[i] * (in.mu[i] - in.tau[i]) / in.rho[i];
    out[i] = ipw + bridge + in.tau[i];
  }
}

void influence_transportation(const InfluenceInputs& in, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double odds = 1.0 - in.rho[i];
    const double ipw = in.match[i] * odds * (in.y[i] - in.mu[i]) / (in.rho[i] * in.pi[i]);
    const double bridge = in.source[i] * odds * (in.mu[i] - in.tau[i]) / in.rho[i];
    out[i] = ipw + bridge + (1.0 - in.source[i]) * in.tau[i];
  }
}

}  // namespace transport::kernels::scalar
