#pragma once

#include <span>
#include <string>

namespace mer {

// A trained per-channel distance. All concrete metrics in this codebase are
// squared Euclidean distances in an embedded space, which lets the tensor
// builder embed every sample once and use the SIMD sqdist kernel for pairs.
// `distance` stays virtual so alternative metrics (or test doubles) can
// bypass the embedding route; implementations must be immutable after
// construction and safe to call concurrently.
class BaseMetric {
 public:
  virtual ~BaseMetric() = default;

  virtual const std::string& label() const = 0;
  virtual const std::string& channel() const = 0;

  virtual bool has_embedding() const { return true; }
  virtual std::size_t embed_dim() const = 0;
  virtual void embed(std::span<const double> x, std::span<double> out) const = 0;

  virtual double distance(std::span<const double> x, std::span<const double> y) const;
};

}  // namespace mer
