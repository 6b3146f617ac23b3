#pragma once
// Full model assembly: resize the input to each scale, run a shared backbone
// to 1/8-resolution features (three stride-2 convs plus one dilated conv, all
// 3x3 with ReLU), apply the pyramid pooling layer, produce a per-scale score
// map with a 1x1 conv, and fuse the maps with the attention weights.

#include <cmath>
#include <string>
#include <vector>

#include "apnet/attention.hpp"
#include "apnet/ops.hpp"
#include "apnet/spp.hpp"
#include "apnet/tensor.hpp"

namespace apnet {

struct ApnetConfig {
  std::vector<double> scales{1.0, 0.75, 0.5};
  int num_classes = 2;
  int in_channels = 1;  // grayscale input by default
  std::vector<int> backbone_channels{8, 16, 32};
  int dilation_rate = 2;
  std::vector<int> spp_levels{1, 2, 3, 6};
  int spp_reduced_channels = 0;  // 0 = auto (backbone out / #levels, min 1)
  bool use_spp = true;
  int input_size = 48;  // square, divisible by 8
};

inline void validate_model_config(const ApnetConfig& cfg) {
  if (cfg.scales.empty()) throw ConfigError("model: empty scale list");
  bool has_full = false;
  for (double s : cfg.scales) {
    if (s <= 0.0 || s > 1.0)
      throw ConfigError("model: scale " + std::to_string(s) +
                        " outside (0, 1]");
    if (s < 0.5)
      throw ConfigError("model: scale " + std::to_string(s) +
                        " below 0.5 is not supported");
    if (s == 1.0) has_full = true;
  }
  if (!has_full) throw ConfigError("model: scales must contain 1.0");
  if (cfg.num_classes < 2 || cfg.num_classes > 254)
    throw ConfigError("model: num_classes must be in [2, 254]");
  if (cfg.in_channels < 1) throw ConfigError("model: in_channels must be >= 1");
  if (cfg.backbone_channels.empty() || cfg.backbone_channels.size() != 3)
    throw ConfigError("model: backbone_channels must list 3 stage widths");
  for (int c : cfg.backbone_channels)
    if (c < 1) throw ConfigError("model: backbone channel width must be >= 1");
  if (cfg.dilation_rate < 1)
    throw ConfigError("model: dilation_rate must be >= 1");
  if (cfg.input_size < 8 || cfg.input_size % 8 != 0)
    throw ConfigError("model: input_size must be a positive multiple of 8");
  if (cfg.use_spp) {
    SppConfig spp{cfg.spp_levels, cfg.backbone_channels.back(),
                  cfg.spp_reduced_channels};
    validate_spp_config(spp);
  }
}

inline SppConfig spp_config_of(const ApnetConfig& cfg) {
  return SppConfig{cfg.spp_levels, cfg.backbone_channels.back(),
                   cfg.spp_reduced_channels};
}

// Scaled input side, snapped to the nearest multiple of 8 (ties up, min 8)
// so the 1/8-stride backbone arithmetic stays integral.
inline int scaled_side(int input_size, double scale) {
  const double raw = scale * input_size;
  const int k = static_cast<int>(std::floor(raw / 8.0 + 0.5));
  return std::max(8, 8 * k);
}

// Channel count entering the score conv.
inline int score_in_channels(const ApnetConfig& cfg) {
  const int c = cfg.backbone_channels.back();
  if (!cfg.use_spp) return c;
  const SppConfig spp = spp_config_of(cfg);
  return c + static_cast<int>(spp.levels.size()) * spp_resolved_reduced(spp);
}

// ---------------------------------------------------------------------------
// Parameters. The backbone stack is a single shared set used at every scale.
// ---------------------------------------------------------------------------

template <typename T>
struct ParamRef {
  std::string name;
  TensorPtr<T> tensor;
  bool weight_decay = true;  // biases and attention logits are exempt
};

template <typename T>
struct ApnetParams {
  std::vector<ConvParams<T>> backbone;   // 3 stride-2 convs + 1 dilated conv
  std::vector<ConvParams<T>> spp_convs;  // one 1x1 conv per pyramid level
  ConvParams<T> score_conv;              // 1x1 to num_classes
  TensorPtr<T> attention_logits;         // (1, 1, 1, S)

  std::vector<ParamRef<T>> refs() {
    std::vector<ParamRef<T>> out;
    for (std::size_t i = 0; i < backbone.size(); ++i) {
      out.push_back({"backbone." + std::to_string(i) + ".weight",
                     backbone[i].weight, true});
      out.push_back({"backbone." + std::to_string(i) + ".bias",
                     backbone[i].bias, false});
    }
    for (std::size_t i = 0; i < spp_convs.size(); ++i) {
      out.push_back(
          {"spp." + std::to_string(i) + ".weight", spp_convs[i].weight, true});
      out.push_back(
          {"spp." + std::to_string(i) + ".bias", spp_convs[i].bias, false});
    }
    out.push_back({"score.weight", score_conv.weight, true});
    out.push_back({"score.bias", score_conv.bias, false});
    out.push_back({"attention.logits", attention_logits, false});
    return out;
  }
};

template <typename T>
ConvParams<T> make_conv_params(int out_c, int in_c, int k, int stride,
                               int dilation, int padding, Rng& rng) {
  ConvParams<T> p;
  p.weight = make_tensor<T>(out_c, in_c, k, k);
  p.bias = make_tensor<T>(out_c, 1, 1, 1);
  p.stride = stride;
  p.dilation = dilation;
  p.padding = padding;
  fill_normal(*p.weight, rng, std::sqrt(2.0 / (in_c * k * k)));  // He init
  return p;
}

template <typename T>
ApnetParams<T> init_params(const ApnetConfig& cfg, std::uint64_t seed) {
  validate_model_config(cfg);
  ApnetParams<T> p;
  Rng rng(Rng::derive(seed, 0xA9));
  int in_c = cfg.in_channels;
  for (int stage = 0; stage < 3; ++stage) {
    const int out_c = cfg.backbone_channels[stage];
    p.backbone.push_back(make_conv_params<T>(out_c, in_c, 3, 2, 1, 1, rng));
    in_c = out_c;
  }
  const int d = cfg.dilation_rate;
  p.backbone.push_back(make_conv_params<T>(in_c, in_c, 3, 1, d, d, rng));

  if (cfg.use_spp) {
    const SppConfig spp = spp_config_of(cfg);
    const int red = spp_resolved_reduced(spp);
    for (std::size_t i = 0; i < spp.levels.size(); ++i)
      p.spp_convs.push_back(make_conv_params<T>(red, in_c, 1, 1, 1, 0, rng));
  }
  p.score_conv =
      make_conv_params<T>(cfg.num_classes, score_in_channels(cfg), 1, 1, 1, 0,
                          rng);
  p.attention_logits =
      make_tensor<T>(1, 1, 1, static_cast<int>(cfg.scales.size()));
  return p;
}

template <typename T>
ApnetParams<T> clone_params(const ApnetParams<T>& src) {
  ApnetParams<T> dst;
  auto copy_conv = [](const ConvParams<T>& c) {
    ConvParams<T> out = c;
    out.weight = std::make_shared<Tensor4<T>>(*c.weight);
    out.bias = std::make_shared<Tensor4<T>>(*c.bias);
    return out;
  };
  for (const auto& c : src.backbone) dst.backbone.push_back(copy_conv(c));
  for (const auto& c : src.spp_convs) dst.spp_convs.push_back(copy_conv(c));
  dst.score_conv = copy_conv(src.score_conv);
  dst.attention_logits = std::make_shared<Tensor4<T>>(*src.attention_logits);
  return dst;
}

// ---------------------------------------------------------------------------
// Forward / predict
// ---------------------------------------------------------------------------

template <typename T>
struct ApnetForward {
  ScaleOutputs<T> outputs;
  TensorPtr<T> fused;
};

template <typename T>
TensorPtr<T> backbone_forward(Tape<T>* tape, const TensorPtr<T>& x,
                              const ApnetParams<T>& params) {
  auto h = x;
  for (const auto& conv : params.backbone) h = relu(tape, conv2d(tape, h, conv));
  return h;
}

template <typename T>
ApnetForward<T> apnet_forward(Tape<T>* tape, const TensorPtr<T>& image,
                              const ApnetParams<T>& params,
                              const ApnetConfig& cfg) {
  if (image->h != image->w)
    throw ShapeError("apnet_forward: input must be square, got " +
                     image->shape_str());
  if (image->h != cfg.input_size)
    throw ShapeError("apnet_forward: input side " + std::to_string(image->h) +
                     " != configured input_size " +
                     std::to_string(cfg.input_size));
  if (image->c != cfg.in_channels)
    throw ShapeError("apnet_forward: input channels " +
                     std::to_string(image->c) + " != configured " +
                     std::to_string(cfg.in_channels));

  const SppConfig spp = spp_config_of(cfg);
  ApnetForward<T> result;
  result.outputs.scales = cfg.scales;
  for (double s : cfg.scales) {
    const int side = scaled_side(cfg.input_size, s);
    auto x = (side == image->h) ? image : bilinear_resize(tape, image, side, side);
    auto feat = backbone_forward(tape, x, params);
    if (cfg.use_spp) feat = spp_forward(tape, feat, spp, params.spp_convs);
    result.outputs.score_maps.push_back(
        conv2d(tape, feat, params.score_conv));
  }
  AttentionWeights<T> w{params.attention_logits};
  result.fused = fuse(tape, result.outputs, w);
  return result;
}

// Upsample the fused score map to input resolution and take the per-pixel
// argmax; ties break toward the lowest class index.
template <typename T>
std::vector<LabelMap> predict(const TensorPtr<T>& fused,
                              const ApnetConfig& cfg) {
  auto full = (fused->h == cfg.input_size && fused->w == cfg.input_size)
                  ? fused
                  : bilinear_resize<T>(nullptr, fused, cfg.input_size,
                                       cfg.input_size);
  std::vector<LabelMap> out;
  const std::size_t plane =
      static_cast<std::size_t>(full->h) * full->w;
  for (int im = 0; im < full->n; ++im) {
    LabelMap lm(full->h, full->w);
    const T* base = &full->data[full->index(im, 0, 0, 0)];
    for (std::size_t px = 0; px < plane; ++px) {
      int best = 0;
      T best_v = base[px];
      for (int j = 1; j < full->c; ++j) {
        const T v = base[j * plane + px];
        if (v > best_v) {
          best_v = v;
          best = j;
        }
      }
      lm.ids[px] = static_cast<std::uint8_t>(best);
    }
    out.push_back(std::move(lm));
  }
  return out;
}

}  // namespace apnet
