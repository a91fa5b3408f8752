#include <cmath>

#include "simd/kernels_impl.hpp"

namespace ttdioc::simd::detail {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void lincomb_scalar(double a, const double* x, double b, const double* y, double* out,
                    std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void scale_scalar(double a, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void gemv_scalar(const double* m, std::size_t rows, std::size_t cols, std::size_t ld,
                 const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = 0.0;
  for (std::size_t c = 0; c < cols; ++c) axpy_scalar(x[c], m + c * ld, y, rows);
}

void gram_upper_scalar(const double* j, std::size_t rows, std::size_t cols, std::size_t ld,
                       double* g, std::size_t ldg) {
  for (std::size_t b = 0; b < cols; ++b) {
    const double* jb = j + b * ld;
    for (std::size_t a = 0; a <= b; ++a) g[a + b * ldg] += dot_scalar(j + a * ld, jb, rows);
  }
}

double amax_scalar(const double* x, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::fmax(m, std::fabs(x[i]));
  return m;
}

constexpr KernelTable kScalar{dot_scalar,  axpy_scalar,       lincomb_scalar, scale_scalar,
                              gemv_scalar, gram_upper_scalar, amax_scalar};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace ttdioc::simd::detail
