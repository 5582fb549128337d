#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference
// implementation and an AVX2/FMA variant; the variant is chosen once at
// runtime from CPUID and can be pinned with set_backend().

#include <cstddef>
#include <span>
#include <string_view>

namespace transport::kernels {

enum class Backend { scalar, avx2 };

std::string_view to_string(Backend backend);
Backend parse_backend(std::string_view text);  // "scalar", "avx2", "auto"

bool backend_available(Backend backend);
Backend detect_best_backend();
Backend active_backend();
// Throws ArgumentError when the CPU lacks the instruction set.
void set_backend(Backend backend);

// Per-record inputs of the uncentered influence function. Indicator spans hold
// 0.0/1.0. Entries that do not apply to a record (e.g. mu on a target record)
// must be finite placeholders; the indicators zero them out.
struct InfluenceInputs {
  std::span<const double> source;  // I(S = 1)
  std::span<const double> match;   // I(A = a, S = 1)
  std::span<const double> y;
  std::span<const double> mu;
  std::span<const double> tau;
  std::span<const double> rho;
  std::span<const double> pi;
};

double sum(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
// sum_i (x_i - center)^2
double sum_squared_deviation(std::span<const double> x, double center);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
// out_r = || query - rows[r] ||^2 for a row-major matrix with `dim` columns.
void squared_distances(std::span<const double> query, std::span<const double> rows,
                       std::size_t dim, std::span<double> out);

// match(y-mu)/(rho pi) + source(mu-tau)/rho + tau
void influence_generalization(const InfluenceInputs& in, std::span<double> out);
// match(1-rho)(y-mu)/(rho pi) + source(1-rho)(mu-tau)/rho + (1-source) tau
void influence_transportation(const InfluenceInputs& in, std::span<double> out);

// Direct access to one backend, used by the equivalence tests.
namespace scalar {
double sum(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
double sum_squared_deviation(std::span<const double> x, double center);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void squared_distances(std::span<const double> query, std::span<const double> rows,
                       std::size_t dim, std::span<double> out);
void influence_generalization(const InfluenceInputs& in, std::span<double> out);
void influence_transportation(const InfluenceInputs& in, std::span<double> out);
}  // namespace scalar

namespace avx2 {
double sum(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
double sum_squared_deviation(std::span<const double> x, double center);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void squared_distances(std::span<const double> query, std::span<const double> rows,
                       std::size_t dim, std::span<double> out);
void influence_generalization(const InfluenceInputs& in, std::span<double> out);
void influence_transportation(const InfluenceInputs& in, std::span<double> out);
}  // namespace avx2

}  // namespace transport::kernels
