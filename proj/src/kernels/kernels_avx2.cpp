// Compiled with -mavx2 -mfma on x86-64; only reached after a CPUID check.

#include "transport/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace transport::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  const __m128d swapped = _mm_unpackhi_pd(pair, pair);
  return _mm_cvtsd_f64(_mm_add_sd(pair, swapped));
}

}  // namespace

double sum(std::span<const double> x) {
  const std::size_t n = x.size();
  const double* p = x.data();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(p + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(p + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(p + i));
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += p[i];
  return s;
}

double dot(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  const double* a = x.data();
  const double* b = y.data();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_squared_deviation(std::span<const double> x, double center) {
  const std::size_t n = x.size();
  const double* p = x.data();
  const __m256d c = _mm256_set1_pd(center);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(p + i), c);
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = p[i] - center;
    s += d * d;
  }
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
  const double* xp = x.data();
  double* yp = y.data();
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(yp + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(xp + i), _mm256_loadu_pd(yp + i)));
  for (; i < n; ++i) yp[i] += alpha * xp[i];
}

void squared_distances(std::span<const double> query, std::span<const double> rows,
                       std::size_t dim, std::span<double> out) {
  const double* q = query.data();
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* row = rows.data() + r * dim;
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= dim; j += 4) {
      const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(q + j), _mm256_loadu_pd(row + j));
      acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum(acc);
    for (; j < dim; ++j) {
      const double d = q[j] - row[j];
      s += d * d;
    }
    out[r] = s;
  }
}

void influence_generalization(const InfluenceInputs& in, std::span<double> out) {
  const std::size_t n = out.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d src = _mm256_loadu_pd(in.source.data() + i);
    const __m256d match = _mm256_loadu_pd(in.match.data() + i);
    const __m256d y = _mm256_loadu_pd(in.y.data() + i);
    const __m256d mu = _mm256_loadu_pd(in.mu.data() + i);
    const __m256d tau = _mm256_loadu_pd(in.tau.data() + i);
    const __m256d rho = _mm256_loadu_pd(in.rho.data() + i);
    const __m256d pi = _mm256_loadu_pd(in.pi.data() + i);
    const __m256d ipw =
        _mm256_div_pd(_mm256_mul_pd(match, _mm256_sub_pd(y, mu)), _mm256_mul_pd(rho, pi));
    const __m256d bridge = _mm256_div_pd(_mm256_mul_pd(src, _mm256_sub_pd(mu, tau)), rho);
    _mm256_storeu_pd(out.data() + i, _mm256_add_pd(_mm256_add_pd(ipw, bridge), tau));
  }
  if (i < n) {
    InfluenceInputs tail{in.source.subspan(i), in.match.subspan(i), in.y.subspan(i),
                         in.mu.subspan(i),     in.tau.subspan(i),   in.rho.subspan(i),
                         in.pi.subspan(i)};
    scalar::influence_generalization(tail, out.subspan(i));
  }
}

void influence_transportation(const InfluenceInputs& in, std::span<double> out) {
  const std::size_t n = out.size();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d src = _mm256_loadu_pd(in.source.data() + i);
    const __m256d match = _mm256_loadu_pd(in.match.data() + i);
    const __m256d y = _mm256_loadu_pd(in.y.data() + i);
    const __m256d mu = _mm256_loadu_pd(in.mu.data() + i);
    const __m256d tau = _mm256_loadu_pd(in.tau.data() + i);
    const __m256d rho = _mm256_loadu_pd(in.rho.data() + i);
    const __m256d pi = _mm256_loadu_pd(in.pi.data() + i);
    const __m256d odds = _mm256_sub_pd(one, rho);
    const __m256d ipw = _mm256_div_pd(
        _mm256_mul_pd(_mm256_mul_pd(match, odds), _mm256_sub_pd(y, mu)), _mm256_mul_pd(rho, pi));
    const __m256d bridge =
        _mm256_div_pd(_mm256_mul_pd(_mm256_mul_pd(src, odds), _mm256_sub_pd(mu, tau)), rho);
    const __m256d target = _mm256_mul_pd(_mm256_sub_pd(one, src), tau);
    _mm256_storeu_pd(out.data() + i, _mm256_add_pd(_mm256_add_pd(ipw, bridge), target));
  }
  if (i < n) {
    InfluenceInputs tail{in.source.subspan(i), in.match.subspan(i), in.y.subspan(i),
                         in.mu.subspan(i),     in.tau.subspan(i),   in.rho.subspan(i),
                         in.pi.subspan(i)};
    scalar::influence_transportation(tail, out.subspan(i));
  }
}

}  // namespace transport::kernels::avx2

#else

// Non-x86 builds: the AVX2 entry points forward to the scalar kernels and
// backend_available(Backend::avx2) reports false.
namespace transport::kernels::avx2 {
double sum(std::span<const double> x) { return scalar::sum(x); }
double dot(std::span<const double> x, std::span<const double> y) { return scalar::dot(x, y); }
double sum_squared_deviation(std::span<const double> x, double c) {
  return scalar::sum_squared_deviation(x, c);
}
void axpy(double alpha, std::span<const double> x, std::span<double> y) { scalar::axpy(alpha, x, y); }
void squared_distances(std::span<const double> q, std::span<const double> rows, std::size_t dim,
                       std::span<double> out) {
  scalar::squared_distances(q, rows, dim, out);
}
void influence_generalization(const InfluenceInputs& in, std::span<double> out) {
  scalar::influence_generalization(in, out);
}
void influence_transportation(const InfluenceInputs& in, std::span<double> out) {
  scalar::influence_transportation(in, out);
}
}  // namespace transport::kernels::avx2

#endif
