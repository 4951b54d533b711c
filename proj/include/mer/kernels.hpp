#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops shared by the distance, kernel and evaluation
// code. A scalar reference implementation always exists; an AVX2 variant is
// selected once per process when the CPU supports it. Set the environment
// variable MER_KERNEL_BACKEND to "scalar" or "avx2" to force a backend.

namespace mer::kernels {

struct MinMax {
  double min;
  double max;
};

struct Ops {
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sqdist)(const double* a, const double* b, std::size_t n);
  // chi-square distance for nonnegative vectors; terms with a zero
  // denominator are skipped (their numerator is zero as well).
  double (*chi2)(const double* a, const double* b, std::size_t n, double tau);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  MinMax (*minmax)(const double* v, std::size_t n);
};

const Ops& scalar_ops();

bool avx2_compiled();
bool avx2_supported();  // compiled in and the CPU reports AVX2 + FMA
const Ops& avx2_ops();  // only valid when avx2_supported()

const Ops& active();
std::string_view backend_name();

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline double sqdist(const double* a, const double* b, std::size_t n) {
  return active().sqdist(a, b, n);
}
inline double chi2(const double* a, const double* b, std::size_t n, double tau) {
  return active().chi2(a, b, n, tau);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline MinMax minmax(const double* v, std::size_t n) {
  return active().minmax(v, n);
}

}  // namespace mer::kernels
