#pragma once
// Differentiable operations: dilated convolution, boundary-clipped average
// pooling, bilinear resize with half-pixel centers, channel concatenation,
// ReLU, elementwise add, softmax cross entropy, and a fixed-projection sum
// used by the gradient checker. Each op validates shapes, computes the
// forward result, and (when a tape is given) records its analytic backward.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "apnet/tensor.hpp"

namespace apnet {

// floor/ceil division for possibly-negative numerators, positive divisor
inline int floor_div(int a, int b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}
inline int ceil_div(int a, int b) {
  return a > 0 ? (a + b - 1) / b : -(-a / b);
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation) with stride, dilation, zero padding.
// ---------------------------------------------------------------------------

template <typename T>
struct ConvParams {
  TensorPtr<T> weight;  // (out_c, in_c, k, k)
  TensorPtr<T> bias;    // (out_c, 1, 1, 1): a plain vector of length out_c
  int stride = 1;
  int dilation = 1;
  int padding = 0;
};

inline int conv_output_size(int in, int k, int stride, int dilation,
                            int padding) {
  return (in + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
}

template <typename T>
void validate_conv_params(const ConvParams<T>& p) {
  if (!p.weight || !p.bias) throw ArgumentError("conv2d: missing weight/bias");
  const auto& wt = *p.weight;
  if (wt.h != wt.w)
    throw ShapeError("conv2d: non-square kernel " + wt.shape_str());
  if (wt.h % 2 == 0)
    throw ArgumentError("conv2d: kernel size must be odd, got " +
                        std::to_string(wt.h));
  if (p.bias->numel() != static_cast<std::size_t>(wt.n))
    throw ShapeError("conv2d: bias length " +
                     std::to_string(p.bias->numel()) + " != out channels " +
                     std::to_string(wt.n));
  if (p.stride < 1 || p.dilation < 1 || p.padding < 0)
    throw ArgumentError("conv2d: stride/dilation must be >= 1, padding >= 0");
}

template <typename T>
TensorPtr<T> conv2d(Tape<T>* tape, const TensorPtr<T>& x,
                    const ConvParams<T>& p) {
  validate_conv_params(p);
  const auto& in = *x;
  const auto& wt = *p.weight;
  const int k = wt.h, s = p.stride, d = p.dilation, pad = p.padding;
  if (in.c != wt.c)
    throw ShapeError("conv2d: input channels " + std::to_string(in.c) +
                     " != weight in_c " + std::to_string(wt.c));
  const int oh = conv_output_size(in.h, k, s, d, pad);
  const int ow = conv_output_size(in.w, k, s, d, pad);
  if (oh <= 0 || ow <= 0)
    throw ShapeError("conv2d: non-positive output size " + std::to_string(oh) +
                     "x" + std::to_string(ow) + " from input " + in.shape_str());

  auto out = make_tensor<T>(in.n, wt.n, oh, ow);

  // Valid output range for a given kernel tap: 0 <= o*s + t*d - pad < in_size.
  auto tap_range = [s, pad](int t, int d_, int in_size, int out_size, int& lo,
                            int& hi) {
    lo = std::max(0, ceil_div(pad - t * d_, s));
    hi = std::min(out_size - 1, floor_div(in_size - 1 + pad - t * d_, s));
  };

  for (int im = 0; im < in.n; ++im) {
    for (int oc = 0; oc < wt.n; ++oc) {
      T* op = &out->data[out->index(im, oc, 0, 0)];
      const T b = p.bias->data[oc];
      for (int i = 0; i < oh * ow; ++i) op[i] = b;
      for (int ic = 0; ic < in.c; ++ic) {
        const T* ip = &in.data[in.index(im, ic, 0, 0)];
        for (int ky = 0; ky < k; ++ky) {
          int oy_lo, oy_hi;
          tap_range(ky, d, in.h, oh, oy_lo, oy_hi);
          for (int kx = 0; kx < k; ++kx) {
            int ox_lo, ox_hi;
            tap_range(kx, d, in.w, ow, ox_lo, ox_hi);
            const T wv = wt.at(oc, ic, ky, kx);
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const T* irow = ip + (oy * s + ky * d - pad) * in.w + kx * d - pad;
              T* orow = op + oy * ow;
              for (int ox = ox_lo; ox <= ox_hi; ++ox)
                orow[ox] += wv * irow[ox * s];
            }
          }
        }
      }
    }
  }

  if (tape) {
    TensorPtr<T> w = p.weight, bias = p.bias;
    tape->record([x, w, bias, out, k, s, d, pad, tap_range]() {
      const auto& in = *x;
      const int oh = out->h, ow = out->w;
      for (int im = 0; im < in.n; ++im) {
        for (int oc = 0; oc < w->n; ++oc) {
          const T* gop = &out->grad[out->index(im, oc, 0, 0)];
          T gb = T(0);
          for (int i = 0; i < oh * ow; ++i) gb += gop[i];
          bias->grad[oc] += gb;
          for (int ic = 0; ic < in.c; ++ic) {
            const T* ip = &in.data[in.index(im, ic, 0, 0)];
            T* gip = &x->grad[in.index(im, ic, 0, 0)];
            for (int ky = 0; ky < k; ++ky) {
              int oy_lo, oy_hi;
              tap_range(ky, d, in.h, oh, oy_lo, oy_hi);
              for (int kx = 0; kx < k; ++kx) {
                int ox_lo, ox_hi;
                tap_range(kx, d, in.w, ow, ox_lo, ox_hi);
                const T wv = w->at(oc, ic, ky, kx);
                T gw = T(0);
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  const int ib = (oy * s + ky * d - pad) * in.w + kx * d - pad;
                  const T* grow = gop + oy * ow;
                  const T* irow = ip + ib;
                  T* girow = gip + ib;
                  for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                    gw += grow[ox] * irow[ox * s];
                    girow[ox * s] += wv * grow[ox];
                  }
                }
                w->gat(oc, ic, ky, kx) += gw;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& x) {
  auto out = make_tensor<T>(x->n, x->c, x->h, x->w);
  const std::size_t m = x->numel();
  for (std::size_t i = 0; i < m; ++i)
    out->data[i] = x->data[i] > T(0) ? x->data[i] : T(0);
  if (tape) {
    tape->record([x, out, m]() {
      for (std::size_t i = 0; i < m; ++i)
        if (x->data[i] > T(0)) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Average pooling with boundary clipping: windows start at multiples of the
// stride; each output is the mean over the window's in-bounds elements only,
// so a constant field stays constant regardless of kernel/stride/size.
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> avg_pool_clipped(Tape<T>* tape, const TensorPtr<T>& x, int kernel,
                              int stride) {
  if (kernel < 1 || stride < 1)
    throw ArgumentError("avg_pool_clipped: kernel and stride must be >= 1");
  const auto& in = *x;
  const int oh = ceil_div(in.h, stride), ow = ceil_div(in.w, stride);
  auto out = make_tensor<T>(in.n, in.c, oh, ow);

  for (int im = 0; im < in.n; ++im) {
    for (int ic = 0; ic < in.c; ++ic) {
      const T* ip = &in.data[in.index(im, ic, 0, 0)];
      T* op = &out->data[out->index(im, ic, 0, 0)];
      for (int oy = 0; oy < oh; ++oy) {
        const int y0 = oy * stride, y1 = std::min(y0 + kernel, in.h);
        for (int ox = 0; ox < ow; ++ox) {
          const int x0 = ox * stride, x1 = std::min(x0 + kernel, in.w);
          T sum = T(0);
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) sum += ip[y * in.w + xx];
          op[oy * ow + ox] = sum / static_cast<T>((y1 - y0) * (x1 - x0));
        }
      }
    }
  }

  if (tape) {
    tape->record([x, out, kernel, stride]() {
      const auto& in = *x;
      const int oh = out->h, ow = out->w;
      for (int im = 0; im < in.n; ++im) {
        for (int ic = 0; ic < in.c; ++ic) {
          T* gip = &x->grad[in.index(im, ic, 0, 0)];
          const T* gop = &out->grad[out->index(im, ic, 0, 0)];
          for (int oy = 0; oy < oh; ++oy) {
            const int y0 = oy * stride, y1 = std::min(y0 + kernel, in.h);
            for (int ox = 0; ox < ow; ++ox) {
              const int x0 = ox * stride, x1 = std::min(x0 + kernel, in.w);
              const T g =
                  gop[oy * ow + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
              for (int y = y0; y < y1; ++y)
                for (int xx = x0; xx < x1; ++xx) gip[y * in.w + xx] += g;
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bilinear resize, half-pixel centers: src = (dst + 0.5) * in/out - 0.5,
// clamped to [0, in-1]. The same mapping is used for up- and downsampling.
// ---------------------------------------------------------------------------

struct LerpCoeff {
  int lo = 0, hi = 0;
  double frac = 0.0;
};

inline std::vector<LerpCoeff> lerp_table(int in, int out) {
  std::vector<LerpCoeff> t(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
    t[i].lo = static_cast<int>(src);
    t[i].hi = std::min(t[i].lo + 1, in - 1);
    t[i].frac = src - t[i].lo;
  }
  return t;
}

template <typename T>
TensorPtr<T> bilinear_resize(Tape<T>* tape, const TensorPtr<T>& x, int out_h,
                             int out_w) {
  if (out_h < 1 || out_w < 1)
    throw ArgumentError("bilinear_resize: output size must be positive");
  const auto& in = *x;
  auto ty = lerp_table(in.h, out_h);
  auto tx = lerp_table(in.w, out_w);
  auto out = make_tensor<T>(in.n, in.c, out_h, out_w);

  for (int im = 0; im < in.n; ++im) {
    for (int ic = 0; ic < in.c; ++ic) {
      const T* ip = &in.data[in.index(im, ic, 0, 0)];
      T* op = &out->data[out->index(im, ic, 0, 0)];
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& cy = ty[oy];
        const T fy = static_cast<T>(cy.frac);
        const T* r0 = ip + cy.lo * in.w;
        const T* r1 = ip + cy.hi * in.w;
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& cx = tx[ox];
          const T fx = static_cast<T>(cx.frac);
          const T top = (T(1) - fx) * r0[cx.lo] + fx * r0[cx.hi];
          const T bot = (T(1) - fx) * r1[cx.lo] + fx * r1[cx.hi];
          op[oy * out_w + ox] = (T(1) - fy) * top + fy * bot;
        }
      }
    }
  }

  if (tape) {
    tape->record([x, out, ty, tx]() {
      const auto& in = *x;
      const int out_h = out->h, out_w = out->w;
      for (int im = 0; im < in.n; ++im) {
        for (int ic = 0; ic < in.c; ++ic) {
          T* gip = &x->grad[in.index(im, ic, 0, 0)];
          const T* gop = &out->grad[out->index(im, ic, 0, 0)];
          for (int oy = 0; oy < out_h; ++oy) {
            const auto& cy = ty[oy];
            const T fy = static_cast<T>(cy.frac);
            for (int ox = 0; ox < out_w; ++ox) {
              const auto& cx = tx[ox];
              const T fx = static_cast<T>(cx.frac);
              const T g = gop[oy * out_w + ox];
              gip[cy.lo * in.w + cx.lo] += (T(1) - fy) * (T(1) - fx) * g;
              gip[cy.lo * in.w + cx.hi] += (T(1) - fy) * fx * g;
              gip[cy.hi * in.w + cx.lo] += fy * (T(1) - fx) * g;
              gip[cy.hi * in.w + cx.hi] += fy * fx * g;
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel concatenation / split
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> concat_channels(Tape<T>* tape,
                             const std::vector<TensorPtr<T>>& inputs) {
  if (inputs.empty())
    throw ArgumentError("concat_channels: empty input list");
  const auto& first = *inputs[0];
  int total_c = 0;
  for (const auto& t : inputs) {
    if (t->n != first.n || t->h != first.h || t->w != first.w)
      throw ShapeError("concat_channels: batch/spatial mismatch, " +
                       t->shape_str() + " vs " + first.shape_str());
    total_c += t->c;
  }
  auto out = make_tensor<T>(first.n, total_c, first.h, first.w);
  const std::size_t plane = static_cast<std::size_t>(first.h) * first.w;

  for (int im = 0; im < first.n; ++im) {
    std::size_t off = out->index(im, 0, 0, 0);
    for (const auto& t : inputs) {
      const std::size_t block = t->c * plane;
      std::copy_n(&t->data[t->index(im, 0, 0, 0)], block, &out->data[off]);
      off += block;
    }
  }

  if (tape) {
    tape->record([inputs, out, plane]() {
      for (int im = 0; im < out->n; ++im) {
        std::size_t off = out->index(im, 0, 0, 0);
        for (const auto& t : inputs) {
          const std::size_t block = t->c * plane;
          T* gi = &t->grad[t->index(im, 0, 0, 0)];
          const T* go = &out->grad[off];
          for (std::size_t i = 0; i < block; ++i) gi[i] += go[i];
          off += block;
        }
      }
    });
  }
  return out;
}

// Inverse of concat_channels by recorded channel sizes. Not differentiable;
// used by tests and diagnostics.
template <typename T>
std::vector<TensorPtr<T>> split_channels(const TensorPtr<T>& x,
                                         const std::vector<int>& sizes) {
  int total = 0;
  for (int s : sizes) total += s;
  if (total != x->c)
    throw ShapeError("split_channels: sizes sum " + std::to_string(total) +
                     " != channels " + std::to_string(x->c));
  std::vector<TensorPtr<T>> parts;
  const std::size_t plane = static_cast<std::size_t>(x->h) * x->w;
  int c0 = 0;
  for (int s : sizes) {
    auto part = make_tensor<T>(x->n, s, x->h, x->w);
    for (int im = 0; im < x->n; ++im)
      std::copy_n(&x->data[x->index(im, c0, 0, 0)], s * plane,
                  &part->data[part->index(im, 0, 0, 0)]);
    parts.push_back(std::move(part));
    c0 += s;
  }
  return parts;
}

// ---------------------------------------------------------------------------
// Elementwise add (used to sum the deep-supervision loss terms).
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (!a->same_shape(*b))
    throw ShapeError("add: shape mismatch " + a->shape_str() + " vs " +
                     b->shape_str());
  auto out = make_tensor<T>(a->n, a->c, a->h, a->w);
  const std::size_t m = a->numel();
  for (std::size_t i = 0; i < m; ++i) out->data[i] = a->data[i] + b->data[i];
  if (tape) {
    tape->record([a, b, out, m]() {
      for (std::size_t i = 0; i < m; ++i) {
        a->grad[i] += out->grad[i];
        b->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax cross entropy over the channel axis, averaged over non-ignored
// pixels of the whole batch. Targets are one LabelMap per batch image.
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> softmax_cross_entropy(Tape<T>* tape, const TensorPtr<T>& logits,
                                   const std::vector<LabelMap>& target,
                                   std::optional<int> ignore_label = {}) {
  const auto& in = *logits;
  if (static_cast<int>(target.size()) != in.n)
    throw ShapeError("softmax_cross_entropy: batch " + std::to_string(in.n) +
                     " logits vs " + std::to_string(target.size()) +
                     " label maps");
  for (int im = 0; im < in.n; ++im)
    if (target[im].h != in.h || target[im].w != in.w)
      throw ShapeError("softmax_cross_entropy: logits " + in.shape_str() +
                       " vs target " + std::to_string(target[im].h) + "x" +
                       std::to_string(target[im].w) + " at image " +
                       std::to_string(im));

  const int C = in.c;
  const std::size_t plane = static_cast<std::size_t>(in.h) * in.w;
  // softmax probabilities, kept for the backward pass
  auto probs = make_tensor<T>(in.n, in.c, in.h, in.w);
  double loss_sum = 0.0;
  std::size_t count = 0;

  for (int im = 0; im < in.n; ++im) {
    const T* ip = &in.data[in.index(im, 0, 0, 0)];
    T* pp = &probs->data[probs->index(im, 0, 0, 0)];
    for (int y = 0; y < in.h; ++y) {
      for (int x = 0; x < in.w; ++x) {
        const std::size_t px = static_cast<std::size_t>(y) * in.w + x;
        const int t = target[im].at(y, x);
        const bool ignored = ignore_label && t == *ignore_label;
        if (!ignored && (t < 0 || t >= C))
          throw DataError("softmax_cross_entropy: label " + std::to_string(t) +
                          " out of range [0," + std::to_string(C) +
                          ") at image " + std::to_string(im) + ", pixel (" +
                          std::to_string(y) + "," + std::to_string(x) + ")");
        T mx = ip[px];
        for (int j = 1; j < C; ++j) mx = std::max(mx, ip[j * plane + px]);
        T sum = T(0);
        for (int j = 0; j < C; ++j) {
          const T e = std::exp(ip[j * plane + px] - mx);
          pp[j * plane + px] = e;
          sum += e;
        }
        for (int j = 0; j < C; ++j) pp[j * plane + px] /= sum;
        if (!ignored) {
          loss_sum += std::log(sum) - (ip[t * plane + px] - mx);
          ++count;
        }
      }
    }
  }

  auto out = make_tensor<T>(1, 1, 1, 1);
  out->data[0] = count ? static_cast<T>(loss_sum / count) : T(0);

  if (tape) {
    tape->record([logits, probs, target, ignore_label, count, plane, C, out]() {
      if (!count) return;
      const auto& in = *logits;
      const T g = out->grad[0] / static_cast<T>(count);
      for (int im = 0; im < in.n; ++im) {
        T* gp = &logits->grad[in.index(im, 0, 0, 0)];
        const T* pp = &probs->data[probs->index(im, 0, 0, 0)];
        for (int y = 0; y < in.h; ++y) {
          for (int x = 0; x < in.w; ++x) {
            const std::size_t px = static_cast<std::size_t>(y) * in.w + x;
            const int t = target[im].at(y, x);
            if (ignore_label && t == *ignore_label) continue;
            for (int j = 0; j < C; ++j) {
              T d = pp[j * plane + px];
              if (j == t) d -= T(1);
              gp[j * plane + px] += g * d;
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fixed-projection reduction to a scalar: sum_i w_i * x_i with constant w.
// The gradient checker uses it to scalarize non-scalar op outputs.
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> weighted_sum(Tape<T>* tape, const TensorPtr<T>& x,
                          const std::vector<T>& w) {
  if (w.size() != x->numel())
    throw ShapeError("weighted_sum: weight length " + std::to_string(w.size()) +
                     " != tensor numel " + std::to_string(x->numel()));
  auto out = make_tensor<T>(1, 1, 1, 1);
  T s = T(0);
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x->data[i];
  out->data[0] = s;
  if (tape) {
    tape->record([x, w, out]() {
      const T g = out->grad[0];
      for (std::size_t i = 0; i < w.size(); ++i) x->grad[i] += g * w[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Label-map resampling by nearest neighbor, same half-pixel mapping as
// bilinear_resize. Labels are categorical; interpolation would invent classes.
// ---------------------------------------------------------------------------

inline LabelMap nearest_resize_labels(const LabelMap& in, int out_h,
                                      int out_w) {
  if (out_h < 1 || out_w < 1)
    throw ArgumentError("nearest_resize_labels: output size must be positive");
  LabelMap out(out_h, out_w);
  const double sy = static_cast<double>(in.h) / out_h;
  const double sx = static_cast<double>(in.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double src_y = (y + 0.5) * sy - 0.5;
    int iy = static_cast<int>(std::floor(src_y + 0.5));
    iy = std::min(std::max(iy, 0), in.h - 1);
    for (int x = 0; x < out_w; ++x) {
      double src_x = (x + 0.5) * sx - 0.5;
      int ix = static_cast<int>(std::floor(src_x + 0.5));
      ix = std::min(std::max(ix, 0), in.w - 1);
      out.at(y, x) = in.at(iy, ix);
    }
  }
  return out;
}

}  // namespace apnet
