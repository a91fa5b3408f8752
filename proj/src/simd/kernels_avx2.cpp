// Compiled with -mavx2 -mfma; only reached through the dispatch table after
// the CPU check in dispatch.cpp.
#include <immintrin.h>

#include <cmath>

#include "simd/kernels_impl.hpp"

namespace ttdioc::simd::detail {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), a1);
  }
  for (; i + 4 <= n; i += 4) a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void lincomb_avx2(double a, const double* x, double b, const double* y, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), t));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void scale_avx2(double a, const double* x, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void gemv_avx2(const double* m, std::size_t rows, std::size_t cols, std::size_t ld, const double* x,
               double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = 0.0;
  for (std::size_t c = 0; c < cols; ++c) axpy_avx2(x[c], m + c * ld, y, rows);
}

// Four output columns per pass so each row block of J is loaded once per
// group instead of once per column pair.
void gram_upper_avx2(const double* j, std::size_t rows, std::size_t cols, std::size_t ld, double* g,
                     std::size_t ldg) {
  for (std::size_t b = 0; b < cols; ++b) {
    const double* jb = j + b * ld;
    std::size_t a = 0;
    for (; a + 4 <= b + 1; a += 4) {
      const double* j0 = j + a * ld;
      const double* j1 = j0 + ld;
      const double* j2 = j1 + ld;
      const double* j3 = j2 + ld;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      std::size_t r = 0;
      for (; r + 4 <= rows; r += 4) {
        const __m256d vb = _mm256_loadu_pd(jb + r);
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(j0 + r), vb, s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(j1 + r), vb, s1);
        s2 = _mm256_fmadd_pd(_mm256_loadu_pd(j2 + r), vb, s2);
        s3 = _mm256_fmadd_pd(_mm256_loadu_pd(j3 + r), vb, s3);
      }
      double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
      for (; r < rows; ++r) {
        t0 += j0[r] * jb[r];
        t1 += j1[r] * jb[r];
        t2 += j2[r] * jb[r];
        t3 += j3[r] * jb[r];
      }
      g[a + b * ldg] += t0;
      g[a + 1 + b * ldg] += t1;
      g[a + 2 + b * ldg] += t2;
      g[a + 3 + b * ldg] += t3;
    }
    for (; a <= b; ++a) g[a + b * ldg] += dot_avx2(j + a * ld, jb, rows);
  }
}

double amax_avx2(const double* x, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d m = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) m = _mm256_max_pd(m, _mm256_andnot_pd(sign, _mm256_loadu_pd(x + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, m);
  double out = std::fmax(std::fmax(lanes[0], lanes[1]), std::fmax(lanes[2], lanes[3]));
  for (; i < n; ++i) out = std::fmax(out, std::fabs(x[i]));
  return out;
}

constexpr KernelTable kAvx2{dot_avx2,  axpy_avx2,       lincomb_avx2, scale_avx2,
                            gemv_avx2, gram_upper_avx2, amax_avx2};

}  // namespace

const KernelTable& avx2_table() noexcept { return kAvx2; }

}  // namespace ttdioc::simd::detail
