#include <atomic>
#include <string>

#include "transport/error.hpp"
#include "transport/kernels.hpp"

namespace transport::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(TRANSPORT_HAVE_AVX2_TU) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<Backend>& active() {
  static std::atomic<Backend> backend{detect_best_backend()};
  return backend;
}

}  // namespace

std::string_view to_string(Backend backend) {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

Backend parse_backend(std::string_view text) {
  if (text == "scalar") return Backend::scalar;
  if (text == "avx2") return Backend::avx2;
  if (text == "auto") return detect_best_backend();
  throw ArgumentError("unknown SIMD backend '" + std::string(text) + "' (expected scalar, avx2 or auto)");
}

bool backend_available(Backend backend) {
  return backend == Backend::scalar || cpu_has_avx2();
}

Backend detect_best_backend() { return cpu_has_avx2() ? Backend::avx2 : Backend::scalar; }

Backend active_backend() { return active().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (!backend_available(backend))
    throw ArgumentError("SIMD backend '" + std::string(to_string(backend)) + "' is not supported by this CPU");
  active().store(backend, std::memory_order_relaxed);
}

#define TRANSPORT_DISPATCH(call)                                        \
  return active_backend() == Backend::avx2 ? avx2::call : scalar::call

double sum(std::span<const double> x) { TRANSPORT_DISPATCH(sum(x)); }
double dot(std::span<const double> x, std::span<const double> y) { TRANSPORT_DISPATCH(dot(x, y)); }
double sum_squared_deviation(std::span<const double> x, double center) {
  TRANSPORT_DISPATCH(sum_squared_deviation(x, center));
}
void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  TRANSPORT_DISPATCH(axpy(alpha, x, y));
}
void squared_distances(std::span<const double> query, std::span<const double> rows,
                       std::size_t dim, std::span<double> out) {
  TRANSPORT_DISPATCH(squared_distances(query, rows, dim, out));
}
void influence_generalization(const InfluenceInputs& in, std::span<double> out) {
  TRANSPORT_DISPATCH(influence_generalization(in, out));
}
void influence_transportation(const InfluenceInputs& in, std::span<double> out) {
  TRANSPORT_DISPATCH(influence_transportation(in, out));
}

#undef TRANSPORT_DISPATCH

}  // namespace transport::kernels
