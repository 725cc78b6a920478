#include "longsim/kernels.hpp"

#include <cmath>
#include <limits>

namespace longsim::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemv_scalar(const double* A, std::size_t rows, std::size_t cols, std::size_t lda,
                 const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(A + r * lda, x, cols);
}

double exp_shifted_scalar(const double* in, double shift, double* out, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - shift);
    s += out[i];
  }
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void syr_lower_scalar(double a, const double* x, double* S, std::size_t p) {
  for (std::size_t i = 0; i < p; ++i) {
    const double ax = a * x[i];
    double* row = S + i * p;
    for (std::size_t j = 0; j <= i; ++j) row[j] += ax * x[j];
  }
}

double max_scalar(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

constexpr KernelTable kScalar{Backend::scalar, dot_scalar,  gemv_scalar,     exp_shifted_scalar,
                              axpy_scalar,     syr_lower_scalar, max_scalar};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace longsim::kernels
