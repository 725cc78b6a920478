#pragma once

// Data-parallel inner loops shared by the generators and the Cox fitter.
//
// Every kernel has a scalar reference implementation; SIMD variants (AVX2+FMA
// on x86-64, NEON on aarch64) are selected once at startup from the CPU
// feature set. LONGSIM_SIMD=scalar|avx2|neon in the environment forces a
// backend. The SIMD variants agree with the scalar ones to rounding; see
// tests/test_kernels.cpp for the equivalence tolerances.

#include <cstddef>
#include <span>
#include <string_view>

namespace longsim::kernels {

enum class Backend { scalar, avx2, neon };

struct KernelTable {
  Backend backend;

  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);

  // y[r] = sum_c A[r * lda + c] * x[c], row-major A of rows x cols
  void (*gemv)(const double* A, std::size_t rows, std::size_t cols, std::size_t lda,
               const double* x, double* y);

  // out[i] = exp(in[i] - shift); returns sum_i out[i]
  double (*exp_shifted)(const double* in, double shift, double* out, std::size_t n);

  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);

  // lower triangle of row-major p x p S: S[i*p + j] += a * x[i] * x[j], j <= i
  void (*syr_lower)(double a, const double* x, double* S, std::size_t p);

  // max_i x[i]; -inf for n == 0
  double (*max)(const double* x, std::size_t n);
};

const KernelTable& scalar_table();
// Null when the backend is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Backend in use by the free functions below.
const KernelTable& active();
void set_backend(Backend b);  // throws std::invalid_argument if unavailable
bool available(Backend b);
std::string_view name(Backend b);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double exp_shifted(std::span<const double> in, double shift, std::span<double> out) {
  return active().exp_shifted(in.data(), shift, out.data(), in.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline double max(std::span<const double> x) { return active().max(x.data(), x.size()); }

}  // namespace longsim::kernels
