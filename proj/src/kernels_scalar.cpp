#include "mer/kernels.hpp"

#include <limits>

namespace mer::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sqdist_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double chi2_scalar(const double* a, const double* b, std::size_t n, double tau) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double num = a[i] - b[i];
    const double den = a[i] + b[i] + tau;
    if (den > 0.0) acc += num * num / den;
  }
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

MinMax minmax_scalar(const double* v, std::size_t n) {
  MinMax r{std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < n; ++i) {
    if (v[i] < r.min) r.min = v[i];
    if (v[i] > r.max) r.max = v[i];
  }
  return r;
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{dot_scalar, sqdist_scalar, chi2_scalar, axpy_scalar,
                       minmax_scalar};
  return ops;
}

}  // namespace mer::kernels
