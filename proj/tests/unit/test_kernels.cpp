#include <doctest.h>

#include <cmath>
#include <vector>

#include "transport/kernels.hpp"
#include "transport/rng.hpp"

using namespace transport;
namespace k = transport::kernels;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -3.0, double hi = 3.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

std::vector<double> random_indicator(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.bernoulli(0.5);
  return v;
}

bool close(double a, double b, double rel = 1e-12) { return std::abs(a - b) <= rel * (1.0 + std::abs(a) + std::abs(b)); }

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("scalar and avx2 agree on every length") {
  if (!k::backend_available(k::Backend::avx2)) {
    MESSAGE("AVX2 not available on this CPU; only the scalar path is exercised");
    return;
  }
  Rng rng(5);
  for (std::size_t n : {0, 1, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 101, 1000, 4099}) {
    CAPTURE(n);
    const auto x = random_vector(rng, n);
    const auto y = random_vector(rng, n);
    CHECK(close(k::scalar::sum(x), k::avx2::sum(x)));
    CHECK(close(k::scalar::dot(x, y), k::avx2::dot(x, y)));
    CHECK(close(k::scalar::sum_squared_deviation(x, 0.3), k::avx2::sum_squared_deviation(x, 0.3)));

    auto y1 = y, y2 = y;
    k::scalar::axpy(1.7, x, y1);
    k::avx2::axpy(1.7, x, y2);
    for (std::size_t i = 0; i < n; ++i) CHECK(close(y1[i], y2[i]));

    const auto src = random_indicator(rng, n);
    auto match = random_indicator(rng, n);
    for (std::size_t i = 0; i < n; ++i) match[i] *= src[i];
    const auto mu = random_vector(rng, n), tau = random_vector(rng, n);
    const auto rho = random_vector(rng, n, 0.05, 0.95), pi = random_vector(rng, n, 0.05, 0.95);
    const k::InfluenceInputs in{src, match, y, mu, tau, rho, pi};
    std::vector<double> a(n), b(n);
    k::scalar::influence_generalization(in, a);
    k::avx2::influence_generalization(in, b);
    for (std::size_t i = 0; i < n; ++i) CHECK(close(a[i], b[i]));
    k::scalar::influence_transportation(in, a);
    k::avx2::influence_transportation(in, b);
    for (std::size_t i = 0; i < n; ++i) CHECK(close(a[i], b[i]));
  }
}

TEST_CASE("squared distances agree across backends and dimensions") {
  if (!k::backend_available(k::Backend::avx2)) return;
  Rng rng(6);
  for (std::size_t dim : {1, 2, 3, 4, 5, 8, 11}) {
    const std::size_t rows = 37;
    const auto q = random_vector(rng, dim);
    const auto r = random_vector(rng, rows * dim);
    std::vector<double> a(rows), b(rows);
    k::scalar::squared_distances(q, r, dim, a);
    k::avx2::squared_distances(q, r, dim, b);
    for (std::size_t i = 0; i < rows; ++i) CHECK(close(a[i], b[i]));
  }
}

TEST_CASE("scalar reference values") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(k::scalar::sum(x) == 15.0);
  CHECK(k::scalar::dot(x, x) == 55.0);
  CHECK(k::scalar::sum_squared_deviation(x, 3.0) == 10.0);
  // generalization influence on one hand-computed record
  const std::vector<double> one{1.0}, y{1.0}, mu{0.5}, tau{0.25}, half{0.5};
  std::vector<double> out(1);
  k::scalar::influence_generalization({one, one, y, mu, tau, half, half}, out);
  CHECK(out[0] == doctest::Approx(2.75));
}

TEST_CASE("backend selection") {
  const auto saved = k::active_backend();
  k::set_backend(k::Backend::scalar);
  CHECK(k::active_backend() == k::Backend::scalar);
  CHECK(k::parse_backend("auto") == k::detect_best_backend());
  CHECK_THROWS(k::parse_backend("neon"));
  k::set_backend(saved);
}

}  // TEST_SUITE
