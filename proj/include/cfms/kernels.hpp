#pragma once

#include <cstddef>

// Inner-loop arithmetic kernels. Every kernel has a scalar reference
// implementation and, where the target supports it, a vectorized variant
// (AVX2+FMA on x86-64, NEON on aarch64). The active variant is picked once
// at startup from CPU capabilities; set CFMS_FORCE_SCALAR=1 in the
// environment to pin the scalar path. Vector and scalar variants may differ
// in the last bits (different summation order); equivalence is asserted in
// tests at 1e-12 relative tolerance.

namespace cfms::kernels {

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double ssq(const double* a, std::size_t n);
double sum(const double* a, std::size_t n);
// y <- y + alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);
// sum of squared differences, sum_i (a_i - b_i)^2
double ssd(const double* a, const double* b, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double ssq(const double* a, std::size_t n);
double sum(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double ssd(const double* a, const double* b, std::size_t n);
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
double ssq(const double* a, std::size_t n);
double sum(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double ssd(const double* a, const double* b, std::size_t n);
}  // namespace neon
#endif

// Dispatched entry points.
double dot(const double* a, const double* b, std::size_t n);
double ssq(const double* a, std::size_t n);
double sum(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double ssd(const double* a, const double* b, std::size_t n);

// Name of the variant the dispatcher selected ("avx2", "neon", "scalar").
const char* active_backend();

}  // namespace cfms::kernels
