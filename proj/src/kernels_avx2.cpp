// Compiled with -mavx2 -mfma on x86_64 (see src/CMakeLists.txt). The loops
// process 4 doubles per iteration with two accumulators to hide FMA latency,
// then fall back to scalar code for the remainder.

#include "mer/kernels.hpp"

#ifdef MER_HAVE_AVX2_TU

#include <immintrin.h>

#include <limits>

namespace mer::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sqdist_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double chi2_avx2(const double* a, const double* b, std::size_t n, double tau) {
  const __m256d vtau = _mm256_set1_pd(tau);
  const __m256d vzero = _mm256_setzero_pd();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d va = _mm256_loadu_pd(a + i);
    __m256d vb = _mm256_loadu_pd(b + i);
    __m256d num = _mm256_sub_pd(va, vb);
    __m256d den = _mm256_add_pd(_mm256_add_pd(va, vb), vtau);
    __m256d term = _mm256_div_pd(_mm256_mul_pd(num, num), den);
    // zero out lanes with a non-positive denominator
    __m256d mask = _mm256_cmp_pd(den, vzero, _CMP_GT_OQ);
    acc = _mm256_add_pd(acc, _mm256_and_pd(term, mask));
  }
  double r = hsum(acc);
  for (; i < n; ++i) {
    const double num = a[i] - b[i];
    const double den = a[i] + b[i] + tau;
    if (den > 0.0) r += num * num / den;
  }
  return r;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

MinMax minmax_avx2(const double* v, std::size_t n) {
  MinMax r{std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity()};
  std::size_t i = 0;
  if (n >= 4) {
    __m256d vmin = _mm256_loadu_pd(v);
    __m256d vmax = vmin;
    for (i = 4; i + 4 <= n; i += 4) {
      __m256d x = _mm256_loadu_pd(v + i);
      vmin = _mm256_min_pd(vmin, x);
      vmax = _mm256_max_pd(vmax, x);
    }
    alignas(32) double tmp[4];
    _mm256_store_pd(tmp, vmin);
    for (double t : tmp)
      if (t < r.min) r.min = t;
    _mm256_store_pd(tmp, vmax);
    for (double t : tmp)
      if (t > r.max) r.max = t;
  }
  for (; i < n; ++i) {
    if (v[i] < r.min) r.min = v[i];
    if (v[i] > r.max) r.max = v[i];
  }
  return r;
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops{dot_avx2, sqdist_avx2, chi2_avx2, axpy_avx2,
                       minmax_avx2};
  return ops;
}

}  // namespace mer::kernels

#endif  // MER_HAVE_AVX2_TU
