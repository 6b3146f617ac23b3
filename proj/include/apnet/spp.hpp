#pragma once
// Pyramid pooling layer: for each level l, pool the n x n feature map with
// kernel = stride = ceil(n/l), reduce channels with a 1x1 conv, upsample back
// to n x n, and concatenate every branch with the original feature map.

#include <string>
#include <vector>

#include "apnet/ops.hpp"
#include "apnet/tensor.hpp"

namespace apnet {

struct SppConfig {
  std::vector<int> levels{1, 2, 3, 6};
  int in_channels = 0;
  int reduced_channels = 0;  // 0 resolves to in_channels / #levels, min 1
};

inline int spp_resolved_reduced(const SppConfig& cfg) {
  if (cfg.reduced_channels > 0) return cfg.reduced_channels;
  const int l = static_cast<int>(cfg.levels.size());
  return std::max(1, l ? cfg.in_channels / l : 1);
}

inline void validate_spp_config(const SppConfig& cfg) {
  if (cfg.levels.empty()) throw ConfigError("spp: empty level list");
  for (std::size_t i = 1; i < cfg.levels.size(); ++i)
    if (cfg.levels[i] <= cfg.levels[i - 1])
      throw ConfigError("spp: levels must be strictly increasing");
  if (cfg.levels.front() < 1) throw ConfigError("spp: levels must be >= 1");
  if (cfg.in_channels < 1) throw ConfigError("spp: in_channels must be >= 1");
  if (spp_resolved_reduced(cfg) < 1)
    throw ConfigError("spp: reduced_channels must be >= 1");
}

// kernel = stride = ceil(n/l); out = ceil(n/kernel). Exposed for tests: when
// l does not divide n the bin count drifts from l (e.g. n=7, l=6 -> out=4).
struct SppBinGeometry {
  int kernel = 0, stride = 0, out = 0;
};

inline SppBinGeometry spp_bin_geometry(int n, int l) {
  if (n < 1 || l < 1) throw ArgumentError("spp_bin_geometry: n, l must be >= 1");
  SppBinGeometry g;
  g.kernel = g.stride = ceil_div(n, l);
  g.out = ceil_div(n, g.kernel);
  return g;
}

template <typename T>
TensorPtr<T> spp_forward(Tape<T>* tape, const TensorPtr<T>& feature,
                         const SppConfig& cfg,
                         const std::vector<ConvParams<T>>& level_convs) {
  validate_spp_config(cfg);
  const auto& in = *feature;
  if (in.h != in.w)
    throw ShapeError("spp_forward: feature map must be square, got " +
                     in.shape_str());
  if (in.c != cfg.in_channels)
    throw ShapeError("spp_forward: feature channels " + std::to_string(in.c) +
                     " != config in_channels " +
                     std::to_string(cfg.in_channels));
  if (level_convs.size() != cfg.levels.size())
    throw ArgumentError("spp_forward: " + std::to_string(level_convs.size()) +
                        " level convs for " + std::to_string(cfg.levels.size()) +
                        " levels");

  const int n = in.h;
  std::vector<TensorPtr<T>> parts{feature};
  for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
    const auto geo = spp_bin_geometry(n, cfg.levels[i]);
    auto pooled = avg_pool_clipped(tape, feature, geo.kernel, geo.stride);
    auto reduced = conv2d(tape, pooled, level_convs[i]);
    parts.push_back(bilinear_resize(tape, reduced, n, n));
  }
  return concat_channels(tape, parts);
}

}  // namespace apnet
