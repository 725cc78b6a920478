// AVX2 + FMA kernels. This translation unit is the only one compiled with
// -mavx2 -mfma; nothing here may run before the dispatcher has confirmed
// CPU support.

#include <immintrin.h>

#include <cmath>
#include <limits>

#include "longsim/kernels.hpp"

namespace longsim::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sw = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sw));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d sw = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, sw));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), s3);
  }
  for (; i + 4 <= n; i += 4)
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double s = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemv_avx2(const double* A, std::size_t rows, std::size_t cols, std::size_t lda,
               const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_avx2(A + r * lda, x, cols);
}

// exp on four lanes: round-to-nearest range reduction by ln 2 (Cody-Waite
// split), degree-13 Taylor polynomial on |r| <= ln2/2, then 2^n applied in
// two halves so that n = 1024 and n = -1022 stay representable.
inline __m256d exp4(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d lo_lim = _mm256_set1_pd(-708.3964185322641);
  const __m256d hi_lim = _mm256_set1_pd(709.782712893384);

  const __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  const __m256d under = _mm256_cmp_pd(x, lo_lim, _CMP_LT_OQ);
  const __m256d over = _mm256_cmp_pd(x, hi_lim, _CMP_GT_OQ);
  __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo_lim), hi_lim);

  __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, xc);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  constexpr double c[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
                          1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
                          1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
                          1.0 / 24.0,         1.0 / 6.0,         0.5,
                          1.0,                1.0};
  __m256d p = _mm256_set1_pd(c[0]);
  for (int k = 1; k < 14; ++k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[k]));

  __m128i ni = _mm256_cvtpd_epi32(n);
  __m128i n1 = _mm_srai_epi32(ni, 1);
  __m128i n2 = _mm_sub_epi32(ni, n1);
  const __m256i bias = _mm256_set1_epi64x(1023);
  __m256d s1 = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(n1), bias), 52));
  __m256d s2 = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(n2), bias), 52));
  __m256d out = _mm256_mul_pd(_mm256_mul_pd(p, s1), s2);

  out = _mm256_blendv_pd(out, _mm256_setzero_pd(), under);
  out = _mm256_blendv_pd(out, _mm256_set1_pd(std::numeric_limits<double>::infinity()), over);
  out = _mm256_blendv_pd(out, x, nan_mask);
  return out;
}

double exp_shifted_avx2(const double* in, double shift, double* out, std::size_t n) {
  const __m256d sh = _mm256_set1_pd(shift);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d e = exp4(_mm256_sub_pd(_mm256_loadu_pd(in + i), sh));
    _mm256_storeu_pd(out + i, e);
    acc = _mm256_add_pd(acc, e);
  }
  double s = hsum(acc);
  if (i < n) {
    alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
    alignas(32) double res[4];
    const std::size_t rem = n - i;
    for (std::size_t k = 0; k < rem; ++k) buf[k] = in[i + k] - shift;
    _mm256_store_pd(res, exp4(_mm256_load_pd(buf)));
    for (std::size_t k = 0; k < rem; ++k) {
      out[i + k] = res[k];
      s += res[k];
    }
  }
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void syr_lower_avx2(double a, const double* x, double* S, std::size_t p) {
  for (std::size_t i = 0; i < p; ++i) axpy_avx2(a * x[i], x, S + i * p, i + 1);
}

double max_avx2(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  if (n >= 4) {
    __m256d mv = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) mv = _mm256_max_pd(mv, _mm256_loadu_pd(x + i));
    m = hmax(mv);
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

constexpr KernelTable kAvx2{Backend::avx2, dot_avx2,       gemv_avx2, exp_shifted_avx2,
                            axpy_avx2,     syr_lower_avx2, max_avx2};

}  // namespace

const KernelTable& avx2_table_unchecked() { return kAvx2; }

}  // namespace longsim::kernels
