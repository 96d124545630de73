#include "cfms/kernels.hpp"

#include <cstdlib>

#if defined(__aarch64__)
#include <arm_neon.h>
#endif

namespace cfms::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double ssq(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

double sum(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double ssd(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace scalar

#if defined(__aarch64__)
namespace neon {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
  double r = vaddvq_f64(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double ssq(const double* a, std::size_t n) { return dot(a, a, n); }

double sum(const double* a, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
  double r = vaddvq_f64(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double ssd(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    acc = vfmaq_f64(acc, d, d);
  }
  double r = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    r += d * d;
  }
  return r;
}

}  // namespace neon
#endif

namespace {

struct Vtable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*ssq)(const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*ssd)(const double*, const double*, std::size_t);
  const char* name;
};

Vtable select_backend() {
  const char* force = std::getenv("CFMS_FORCE_SCALAR");
  const bool forced_scalar = force != nullptr && force[0] == '1';
#if defined(__x86_64__) || defined(_M_X64)
  if (!forced_scalar && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return {avx2::dot, avx2::ssq, avx2::sum, avx2::axpy, avx2::ssd, "avx2"};
  }
#elif defined(__aarch64__)
  if (!forced_scalar) {
    return {neon::dot, neon::ssq, neon::sum, neon::axpy, neon::ssd, "neon"};
  }
#endif
  (void)forced_scalar;
  return {scalar::dot, scalar::ssq, scalar::sum, scalar::axpy, scalar::ssd, "scalar"};
}

const Vtable& table() {
  static const Vtable t = select_backend();
  return t;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) { return table().dot(a, b, n); }
double ssq(const double* a, std::size_t n) { return table().ssq(a, n); }
double sum(const double* a, std::size_t n) { return table().sum(a, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { table().axpy(alpha, x, y, n); }
double ssd(const double* a, const double* b, std::size_t n) { return table().ssd(a, b, n); }
const char* active_backend() { return table().name; }

}  // namespace cfms::kernels
