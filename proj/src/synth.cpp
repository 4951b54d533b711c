#include "mer/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "mer/kernels.hpp"
#include "mer/util.hpp"

namespace mer {

namespace {

double uniform01(std::mt19937_64& rng) {
  // 53-bit mantissa draw, identical across platforms
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double normal(std::mt19937_64& rng) {
  // Box-Muller; avoids the implementation-defined std::normal_distribution
  double u1 = uniform01(rng);
  while (u1 == 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// anchors separated pairwise by >= margin, drawn by rejection inside a box
// whose volume grows with m so the sampling terminates quickly
std::vector<std::vector<double>> draw_anchors(std::mt19937_64& rng, std::size_t m,
                                              std::size_t dim, double margin,
                                              const std::string& channel) {
  const double side =
      margin * std::pow(50.0 * static_cast<double>(m), 1.0 / static_cast<double>(dim));
  std::vector<std::vector<double>> anchors;
  anchors.reserve(m);
  std::size_t attempts = 0;
  const std::size_t max_attempts = 1000 * m + 1000;
  std::vector<double> cand(dim);
  while (anchors.size() < m) {
    if (++attempts > max_attempts)
      throw Error("synth: infeasible margin " + format_double(margin) +
                  " for m=" + std::to_string(m) + " in dimension " +
                  std::to_string(dim) + " (channel '" + channel + "')");
    // shifted by margin/4 so view points stay nonnegative (histogram-friendly)
    for (std::size_t d = 0; d < dim; ++d)
      cand[d] = uniform01(rng) * side + margin * 0.25;
    bool ok = true;
    for (const auto& a : anchors) {
      if (kernels::sqdist(cand.data(), a.data(), dim) < margin * margin) {
        ok = false;
        break;
      }
    }
    if (ok) anchors.push_back(cand);
  }
  return anchors;
}

// uniform draw from the ball of radius `radius`
std::vector<double> ball_offset(std::mt19937_64& rng, std::size_t dim, double radius) {
  std::vector<double> v(dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      v[d] = normal(rng);
      norm2 += v[d] * v[d];
    }
  } while (norm2 == 0.0);
  const double r =
      radius * std::pow(uniform01(rng), 1.0 / static_cast<double>(dim));
  const double s = r / std::sqrt(norm2);
  for (double& x : v) x *= s;
  return v;
}

std::string auto_id(std::size_t i, std::size_t m) {
  std::size_t width = 1;
  for (std::size_t v = m - 1; v >= 10; v /= 10) ++width;
  std::string digits = std::to_string(i);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return "p" + digits;
}

}  // namespace

Dataset synth_generate(const SynthConfig& cfg) {
  if (cfg.m < 2) throw Error("synth: need m >= 2 individuals");
  if (cfg.channels.empty()) throw Error("synth: need at least one channel");

  std::vector<std::string> ids(cfg.m);
  for (std::size_t i = 0; i < cfg.m; ++i) ids[i] = auto_id(i, cfg.m);

  std::vector<FeatureSample> samples(2 * cfg.m);
  for (std::size_t i = 0; i < cfg.m; ++i) {
    samples[2 * i] = {ids[i], View::A, {}};
    samples[2 * i + 1] = {ids[i], View::B, {}};
  }

  // partial channels take consecutive arcs of one shared shuffled order, so
  // several partials complement each other instead of overlapping at random
  std::vector<std::size_t> arc_order(cfg.m);
  for (std::size_t i = 0; i < cfg.m; ++i) arc_order[i] = i;
  {
    std::mt19937_64 arc_rng(substream_seed(cfg.seed, 0xC0));
    deterministic_shuffle(arc_order, arc_rng);
  }
  std::size_t arc_offset = 0;

  for (std::size_t c = 0; c < cfg.channels.size(); ++c) {
    const SynthChannelSpec& ch = cfg.channels[c];
    const std::string name = ch.name.empty() ? "c" + std::to_string(c) : ch.name;
    if (ch.dim == 0) throw Error("synth: channel '" + name + "' has dimension 0");
    if (!(ch.scale > 0.0))
      throw Error("synth: channel '" + name + "' needs a positive scale");
    std::mt19937_64 rng(substream_seed(cfg.seed, 0x100 + c));

    std::vector<std::vector<double>> va(cfg.m), vb(cfg.m);
    if (ch.kind == SynthChannelSpec::Kind::noise) {
      for (std::size_t i = 0; i < cfg.m; ++i) {
        va[i].resize(ch.dim);
        vb[i].resize(ch.dim);
        for (double& x : va[i]) x = normal(rng);
        for (double& x : vb[i]) x = normal(rng);
      }
    } else {
      if (!(ch.margin > 0.0) || ch.delta < 0.0)
        throw Error("synth: channel '" + name +
                    "' needs margin > 0 and delta >= 0");
      // views sit within delta of their anchor, so anchors must be separated
      // by more than 4*delta for same-identity pairs to stay nearest
      if (ch.margin <= 4.0 * ch.delta)
        throw Error("synth: infeasible margin/delta for channel '" + name +
                    "': margin must exceed 4*delta");
      if (ch.kind == SynthChannelSpec::Kind::partial &&
          (ch.coverage < 0.0 || ch.coverage > 1.0))
        throw Error("synth: channel '" + name + "' coverage must lie in [0,1]");

      // grouped channels hand one anchor to `group` consecutive ids of the
      // rotated shared order; the rotation advances by one per channel so the
      // groups of successive grouped channels never repeat a pair
      std::size_t num_anchors = cfg.m;
      std::vector<std::size_t> anchor_of(cfg.m);
      for (std::size_t i = 0; i < cfg.m; ++i) anchor_of[i] = i;
      if (ch.kind == SynthChannelSpec::Kind::grouped) {
        if (ch.group < 2 || ch.group > cfg.m)
          throw Error("synth: channel '" + name + "' group must lie in [2, m]");
        num_anchors = (cfg.m + ch.group - 1) / ch.group;
        for (std::size_t i = 0; i < cfg.m; ++i)
          anchor_of[arc_order[(arc_offset + i) % cfg.m]] = i / ch.group;
        arc_offset += 1;
      }

      const auto anchors = draw_anchors(rng, num_anchors, ch.dim, ch.margin, name);
      const double side = ch.margin *
          std::pow(50.0 * static_cast<double>(cfg.m), 1.0 / static_cast<double>(ch.dim));

      std::vector<bool> informative(cfg.m, true);
      if (ch.kind == SynthChannelSpec::Kind::partial) {
        const auto covered = static_cast<std::size_t>(
            std::llround(ch.coverage * static_cast<double>(cfg.m)));
        informative.assign(cfg.m, false);
        for (std::size_t i = 0; i < covered; ++i)
          informative[arc_order[(arc_offset + i) % cfg.m]] = true;
        arc_offset += covered;
      }

      for (std::size_t i = 0; i < cfg.m; ++i) {
        const auto& anchor = anchors[anchor_of[i]];
        const auto off_a = ball_offset(rng, ch.dim, ch.delta);
        va[i].resize(ch.dim);
        for (std::size_t d = 0; d < ch.dim; ++d) va[i][d] = anchor[d] + off_a[d];
        vb[i].resize(ch.dim);
        if (informative[i]) {
          const auto off_b = ball_offset(rng, ch.dim, ch.delta);
          for (std::size_t d = 0; d < ch.dim; ++d)
            vb[i][d] = anchor[d] + off_b[d];
        } else {
          for (std::size_t d = 0; d < ch.dim; ++d) vb[i][d] = uniform01(rng) * side;
        }
      }
    }

    for (std::size_t i = 0; i < cfg.m; ++i) {
      for (double& x : va[i]) x *= ch.scale;
      for (double& x : vb[i]) x *= ch.scale;
      samples[2 * i].channels.emplace_back(name, std::move(va[i]));
      samples[2 * i + 1].channels.emplace_back(name, std::move(vb[i]));
    }
  }

  return Dataset::from_samples(std::move(samples));
}

}  // namespace mer
