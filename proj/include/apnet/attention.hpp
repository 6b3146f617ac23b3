#pragma once
// Multi-scale attention head: learned scalar weights, parameterized as a
// softmax over trainable logits, combine per-scale score maps into the final
// score map. Training adds one cross-entropy term per scale on top of the
// fused loss (deep supervision), all terms weighted 1.

#include <cmath>
#include <optional>
#include <vector>

#include "apnet/ops.hpp"
#include "apnet/tensor.hpp"

namespace apnet {

// Trainable logits of length S; weights are softmax(logits), so they stay
// positive and sum to 1. Zero-initialized logits give equal weights 1/S.
template <typename T>
struct AttentionWeights {
  TensorPtr<T> logits;  // (1, 1, 1, S)

  static AttentionWeights zeros(int num_scales) {
    if (num_scales < 1)
      throw ArgumentError("AttentionWeights: need at least one scale");
    return AttentionWeights{make_tensor<T>(1, 1, 1, num_scales)};
  }

  int size() const { return logits->w; }

  std::vector<T> lambdas() const {
    const int s = size();
    std::vector<T> lam(s);
    T mx = logits->data[0];
    for (int i = 1; i < s; ++i) mx = std::max(mx, logits->data[i]);
    T sum = T(0);
    for (int i = 0; i < s; ++i) {
      lam[i] = std::exp(logits->data[i] - mx);
      sum += lam[i];
    }
    for (auto& v : lam) v /= sum;
    return lam;
  }
};

// One score map per scale, each at its own scale's resolution. Scale 1.0 must
// be present; its map is the largest and sets the fused output resolution.
template <typename T>
struct ScaleOutputs {
  std::vector<TensorPtr<T>> score_maps;
  std::vector<double> scales;

  int index_of_full_scale() const {
    for (std::size_t i = 0; i < scales.size(); ++i)
      if (scales[i] == 1.0) return static_cast<int>(i);
    throw ArgumentError("ScaleOutputs: scale 1.0 not present");
  }
};

// Weighted sum of same-sized maps: out = sum_i softmax(logits)_i * map_i,
// differentiable with respect to both the maps and the logits.
template <typename T>
TensorPtr<T> attention_combine(Tape<T>* tape,
                               const std::vector<TensorPtr<T>>& maps,
                               const TensorPtr<T>& logits) {
  if (maps.empty()) throw ArgumentError("attention_combine: empty map list");
  const int S = static_cast<int>(maps.size());
  if (logits->numel() != static_cast<std::size_t>(S))
    throw ShapeError("attention_combine: " + std::to_string(logits->numel()) +
                     " logits for " + std::to_string(S) + " maps");
  for (int i = 1; i < S; ++i)
    if (!maps[i]->same_shape(*maps[0]))
      throw ShapeError("attention_combine: map shape mismatch " +
                       maps[i]->shape_str() + " vs " + maps[0]->shape_str());

  AttentionWeights<T> w{logits};
  const std::vector<T> lam = w.lambdas();
  auto out = make_tensor<T>(maps[0]->n, maps[0]->c, maps[0]->h, maps[0]->w);
  const std::size_t m = out->numel();
  for (int i = 0; i < S; ++i) {
    const T li = lam[i];
    const T* src = maps[i]->data.data();
    for (std::size_t j = 0; j < m; ++j) out->data[j] += li * src[j];
  }

  if (tape) {
    tape->record([maps, logits, out, lam, m, S]() {
      // d out / d map_i = lambda_i; d lambda / d logit via softmax Jacobian
      std::vector<T> gl(S, T(0));  // dLoss/dlambda_i = <gout, map_i>
      const T* go = out->grad.data();
      for (int i = 0; i < S; ++i) {
        const T* src = maps[i]->data.data();
        T* gm = maps[i]->grad.data();
        T dot = T(0);
        for (std::size_t j = 0; j < m; ++j) {
          dot += go[j] * src[j];
          gm[j] += lam[i] * go[j];
        }
        gl[i] = dot;
      }
      T inner = T(0);
      for (int i = 0; i < S; ++i) inner += lam[i] * gl[i];
      for (int i = 0; i < S; ++i)
        logits->grad[i] += lam[i] * (gl[i] - inner);
    });
  }
  return out;
}

// Resize every score map to the full-scale map's resolution, then combine.
template <typename T>
TensorPtr<T> fuse(Tape<T>* tape, const ScaleOutputs<T>& outputs,
                  const AttentionWeights<T>& weights) {
  if (outputs.score_maps.empty())
    throw ArgumentError("fuse: empty score-map list");
  if (outputs.score_maps.size() != outputs.scales.size())
    throw ArgumentError("fuse: scales/score-map count mismatch");
  const int full = outputs.index_of_full_scale();
  const int th = outputs.score_maps[full]->h;
  const int tw = outputs.score_maps[full]->w;
  std::vector<TensorPtr<T>> resized;
  resized.reserve(outputs.score_maps.size());
  for (const auto& f : outputs.score_maps) {
    if (f->h > th || f->w > tw)
      throw ShapeError("fuse: scale-1.0 map is not the largest");
    resized.push_back(f->h == th && f->w == tw
                          ? f
                          : bilinear_resize(tape, f, th, tw));
  }
  return attention_combine(tape, resized, weights.logits);
}

// Deep-supervision loss: cross entropy of the fused map upsampled to ground
// truth resolution, plus one cross-entropy term per scale against the ground
// truth downsampled (nearest neighbor) to that scale's map resolution.
template <typename T>
TensorPtr<T> deep_supervision_loss(Tape<T>* tape,
                                   const ScaleOutputs<T>& outputs,
                                   const TensorPtr<T>& fused,
                                   const std::vector<LabelMap>& gt,
                                   std::optional<int> ignore_label = {},
                                   bool include_per_scale = true) {
  if (gt.empty()) throw ArgumentError("deep_supervision_loss: empty gt batch");
  const int gh = gt[0].h, gw = gt[0].w;
  for (const auto& m : gt)
    if (m.h != gh || m.w != gw)
      throw ShapeError("deep_supervision_loss: ragged gt batch");

  auto fused_full = (fused->h == gh && fused->w == gw)
                        ? fused
                        : bilinear_resize(tape, fused, gh, gw);
  auto total = softmax_cross_entropy(tape, fused_full, gt, ignore_label);

  if (include_per_scale) {
    for (const auto& f : outputs.score_maps) {
      std::vector<LabelMap> gt_i;
      gt_i.reserve(gt.size());
      for (const auto& m : gt)
        gt_i.push_back((m.h == f->h && m.w == f->w)
                           ? m
                           : nearest_resize_labels(m, f->h, f->w));
      total = add(tape, total,
                  softmax_cross_entropy(tape, f, gt_i, ignore_label));
    }
  }
  return total;
}

}  // namespace apnet
