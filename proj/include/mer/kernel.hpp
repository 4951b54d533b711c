#pragma once

#include <span>
#include <string>
#include <vector>

namespace mer {

enum class KernelKind { gauss_rbf, chi2_rbf };

std::string kernel_kind_name(KernelKind k);
KernelKind kernel_kind_from_name(const std::string& s);

struct KernelParams {
  KernelKind kind = KernelKind::gauss_rbf;
  double sigma2 = 1.0;
  double tau = 1e-12;  // chi-square stabilizer
};

// the base distance the kernel exponentiates: squared Euclidean for
// gauss_rbf, the chi-square distance for chi2_rbf (requires nonnegative
// entries)
double kernel_base_distance(const KernelParams& p, std::span<const double> x,
                            std::span<const double> y);

// k(x, y) = exp(-base_distance / sigma2)
double kernel_eval(const KernelParams& p, std::span<const double> x,
                   std::span<const double> y);

// q-quantile (linear interpolation between order statistics) of the given
// distances; a zero result falls back to the smallest positive distance and
// an all-zero sample is an error
double sigma_from_quantile(std::vector<double> distances, double q);

}  // namespace mer
