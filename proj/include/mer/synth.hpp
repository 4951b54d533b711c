#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mer/dataset.hpp"

namespace mer {

// Channel recipes:
//   oracle  - per-individual anchors pairwise separated by at least `margin`,
//             both views within `delta` of the anchor. Nearest-neighbour
//             matching on this channel alone is correct by construction.
//   noise   - both views drawn i.i.d. N(0, scale^2); carries no identity.
//   partial - like oracle, but only a `coverage` fraction of individuals get
//             a correlated view B; the rest get an uninformative view B.
//             Several partial channels cover consecutive arcs of one shared
//             shuffled order, so their informative sets complement each
//             other (total coverage >= 1 leaves nobody uncovered).
//   grouped - `group` individuals share each anchor, so the channel cannot
//             tell group members apart but separates groups by `margin`.
//             Successive grouped channels shift the shared order by one,
//             which makes their confusion sets complementary: no two ids
//             share a group in more than one channel.
struct SynthChannelSpec {
  enum class Kind { oracle, noise, partial, grouped };
  Kind kind = Kind::oracle;
  std::string name;  // empty = auto ("c0", "c1", ...)
  std::size_t dim = 3;
  double margin = 10.0;
  double delta = 0.1;
  double scale = 1.0;      // multiplies the whole channel
  double coverage = 1.0;   // partial only
  std::size_t group = 2;   // grouped only
};

struct SynthConfig {
  std::size_t m = 2;
  std::uint64_t seed = 0;
  std::vector<SynthChannelSpec> channels;
};

Dataset synth_generate(const SynthConfig& cfg);

}  // namespace mer
