// NEON (aarch64) kernels. Advanced SIMD is mandatory on aarch64, so no
// runtime probe is needed. exp falls back to libm per lane.

#include <arm_neon.h>

#include <cmath>
#include <limits>

#include "longsim/kernels.hpp"

namespace longsim::kernels {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0), s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = vfmaq_f64(s0, vld1q_f64(a + i), vld1q_f64(b + i));
    s1 = vfmaq_f64(s1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemv_neon(const double* A, std::size_t rows, std::size_t cols, std::size_t lda,
               const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_neon(A + r * lda, x, cols);
}

double exp_shifted_neon(const double* in, double shift, double* out, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - shift);
    s += out[i];
  }
  return s;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void syr_lower_neon(double a, const double* x, double* S, std::size_t p) {
  for (std::size_t i = 0; i < p; ++i) axpy_neon(a * x[i], x, S + i * p, i + 1);
}

double max_neon(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  if (n >= 2) {
    float64x2_t mv = vld1q_f64(x);
    for (i = 2; i + 2 <= n; i += 2) mv = vmaxq_f64(mv, vld1q_f64(x + i));
    m = vmaxvq_f64(mv);
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

constexpr KernelTable kNeon{Backend::neon, dot_neon,       gemv_neon, exp_shifted_neon,
                            axpy_neon,     syr_lower_neon, max_neon};

}  // namespace

const KernelTable& neon_table_unchecked() { return kNeon; }

}  // namespace longsim::kernels
