#include "mer/kernel.hpp"

#include <algorithm>
#include <cmath>

#include "mer/kernels.hpp"
#include "mer/util.hpp"

namespace mer {

std::string kernel_kind_name(KernelKind k) {
  return k == KernelKind::gauss_rbf ? "gauss" : "chi2";
}

KernelKind kernel_kind_from_name(const std::string& s) {
  if (s == "gauss" || s == "gauss_rbf") return KernelKind::gauss_rbf;
  if (s == "chi2" || s == "chi2_rbf") return KernelKind::chi2_rbf;
  throw Error("unknown kernel kind '" + s + "' (expected gauss or chi2)");
}

double kernel_base_distance(const KernelParams& p, std::span<const double> x,
                            std::span<const double> y) {
  if (x.size() != y.size())
    throw Error("kernel: mismatched vector dimensions " + std::to_string(x.size()) +
                " vs " + std::to_string(y.size()));
  if (p.kind == KernelKind::gauss_rbf)
    return kernels::sqdist(x.data(), y.data(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < 0.0 || y[i] < 0.0)
      throw Error("chi2 kernel: negative entry at index " + std::to_string(i));
  return kernels::chi2(x.data(), y.data(), x.size(), p.tau);
}

double kernel_eval(const KernelParams& p, std::span<const double> x,
                   std::span<const double> y) {
  if (!(p.sigma2 > 0.0)) throw Error("kernel: sigma2 must be positive");
  return std::exp(-kernel_base_distance(p, x, y) / p.sigma2);
}

double sigma_from_quantile(std::vector<double> distances, double q) {
  if (distances.empty()) throw Error("sigma_from_quantile: empty distance sample");
  if (q < 0.0 || q > 1.0) throw Error("sigma_from_quantile: quantile outside [0,1]");
  for (double d : distances)
    if (!std::isfinite(d) || d < 0.0)
      throw Error("sigma_from_quantile: invalid distance in sample");
  std::sort(distances.begin(), distances.end());
  const double h = q * static_cast<double>(distances.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, distances.size() - 1);
  const double frac = h - static_cast<double>(lo);
  double v = distances[lo] + frac * (distances[hi] - distances[lo]);
  if (v > 0.0) return v;
  // degenerate low quantile: use the smallest positive distance instead
  for (double d : distances)
    if (d > 0.0) return d;
  throw Error("sigma_from_quantile: all pairwise distances are zero");
}

}  // namespace mer
