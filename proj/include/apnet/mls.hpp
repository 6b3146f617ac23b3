#pragma once
// Deformation augmentation: affine moving-least-squares warping driven by a
// randomly displaced control-point lattice, applied jointly to an image
// (bilinear) and its label map (nearest neighbor). Also a reference
// mirror/resize/rotate composition used as the conventional-augmentation arm.
//
// The backward map is MLS evaluated with the control roles swapped (pairs
// (q, p)); that is an approximation to the true inverse, which is fine for
// augmentation where plausible deformation is the goal.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "apnet/tensor.hpp"

namespace apnet {

struct Point2 {
  double x = 0.0, y = 0.0;
};

// Paired source/target control points with distance weighting exponent alpha:
// w_i = 1 / |p_i - v|^(2*alpha).
struct ControlPointSet {
  std::vector<Point2> p;
  std::vector<Point2> q;
  double alpha = 1.0;
};

inline void validate_control_points(const ControlPointSet& cps) {
  if (cps.p.size() != cps.q.size())
    throw ArgumentError("mls: control point lists differ in length");
  if (cps.p.size() < 3)
    throw ArgumentError("mls: need at least 3 control points, got " +
                        std::to_string(cps.p.size()));
  if (cps.alpha <= 0.0) throw ArgumentError("mls: alpha must be positive");
}

// Best-fit affine transform at v under distance-decaying weights:
//   p* = sum w_i p_i / sum w_i, q* likewise, hats are centered points,
//   M = (sum w_i phat_i^T phat_i)^(-1) (sum w_i phat_i^T qhat_i),
//   f(v) = (v - p*) M + q*.
// If v coincides with a control point (distance < 1e-9), returns q_i.
inline Point2 mls_affine_map(Point2 v, const ControlPointSet& cps) {
  validate_control_points(cps);
  const std::size_t m = cps.p.size();

  std::vector<double> w(m);
  double wsum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dx = cps.p[i].x - v.x, dy = cps.p[i].y - v.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < 1e-18) return cps.q[i];
    w[i] = 1.0 / std::pow(d2, cps.alpha);
    wsum += w[i];
  }

  Point2 pc{0, 0}, qc{0, 0};
  for (std::size_t i = 0; i < m; ++i) {
    pc.x += w[i] * cps.p[i].x;
    pc.y += w[i] * cps.p[i].y;
    qc.x += w[i] * cps.q[i].x;
    qc.y += w[i] * cps.q[i].y;
  }
  pc.x /= wsum;
  pc.y /= wsum;
  qc.x /= wsum;
  qc.y /= wsum;

  // A = sum w phat^T phat (2x2 symmetric), B = sum w phat^T qhat
  double a00 = 0, a01 = 0, a11 = 0;
  double b00 = 0, b01 = 0, b10 = 0, b11 = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double px = cps.p[i].x - pc.x, py = cps.p[i].y - pc.y;
    const double qx = cps.q[i].x - qc.x, qy = cps.q[i].y - qc.y;
    a00 += w[i] * px * px;
    a01 += w[i] * px * py;
    a11 += w[i] * py * py;
    b00 += w[i] * px * qx;
    b01 += w[i] * px * qy;
    b10 += w[i] * py * qx;
    b11 += w[i] * py * qy;
  }
  const double det = a00 * a11 - a01 * a01;
  const double scale = std::max(std::fabs(a00 * a11), std::fabs(a01 * a01));
  if (std::fabs(det) < 1e-12 * std::max(scale, 1e-30))
    throw NumericError(
        "mls: singular moment matrix (control points nearly collinear)");
  const double i00 = a11 / det, i01 = -a01 / det, i11 = a00 / det;
  // M = A^(-1) B, row-vector convention: f(v) = (v - p*) M + q*
  const double m00 = i00 * b00 + i01 * b10;
  const double m01 = i00 * b01 + i01 * b11;
  const double m10 = i01 * b00 + i11 * b10;
  const double m11 = i01 * b01 + i11 * b11;
  const double vx = v.x - pc.x, vy = v.y - pc.y;
  return Point2{vx * m00 + vy * m10 + qc.x, vx * m01 + vy * m11 + qc.y};
}

// Random deformation spec: a g x g control lattice over the image with per
// point displacement drawn uniformly from [-d, d]^2. d must stay under half
// the lattice spacing to keep the warp fold-free in practice.
struct DeformSpec {
  int grid = 4;
  double max_displacement = -1.0;  // pixels; negative resolves to 5% of side
  std::uint64_t seed = 1;
  double alpha = 1.0;
};

inline double resolve_max_displacement(const DeformSpec& spec, int side) {
  return spec.max_displacement >= 0.0 ? spec.max_displacement : 0.05 * side;
}

inline ControlPointSet make_deform_control_points(int h, int w,
                                                  const DeformSpec& spec) {
  if (spec.grid < 2) throw ArgumentError("deform: grid must be >= 2");
  const int side = std::min(h, w);
  const double d = resolve_max_displacement(spec, side);
  const double spacing =
      static_cast<double>(std::min(h, w) - 1) / (spec.grid - 1);
  if (d < 0.0 || d >= 0.5 * spacing)
    throw ArgumentError("deform: max displacement " + std::to_string(d) +
                        " must be below half the lattice spacing " +
                        std::to_string(0.5 * spacing));
  ControlPointSet cps;
  cps.alpha = spec.alpha;
  Rng rng(spec.seed);
  for (int gy = 0; gy < spec.grid; ++gy) {
    for (int gx = 0; gx < spec.grid; ++gx) {
      Point2 p{static_cast<double>(w - 1) * gx / (spec.grid - 1),
               static_cast<double>(h - 1) * gy / (spec.grid - 1)};
      cps.p.push_back(p);
      const double dx = rng.uniform(-d, d);
      const double dy = rng.uniform(-d, d);
      cps.q.push_back(Point2{p.x + dx, p.y + dy});
    }
  }
  return cps;
}

namespace detail {

template <typename T>
T sample_bilinear_clamped(const Tensor4<T>& img, int im, int ch, double sx,
                          double sy) {
  sx = std::min(std::max(sx, 0.0), static_cast<double>(img.w - 1));
  sy = std::min(std::max(sy, 0.0), static_cast<double>(img.h - 1));
  const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
  const int x1 = std::min(x0 + 1, img.w - 1), y1 = std::min(y0 + 1, img.h - 1);
  const T fx = static_cast<T>(sx - x0), fy = static_cast<T>(sy - y0);
  const T top = (T(1) - fx) * img.at(im, ch, y0, x0) + fx * img.at(im, ch, y0, x1);
  const T bot = (T(1) - fx) * img.at(im, ch, y1, x0) + fx * img.at(im, ch, y1, x1);
  return (T(1) - fy) * top + fy * bot;
}

inline std::uint8_t sample_nearest_clamped(const LabelMap& lm, double sx,
                                           double sy) {
  int x = static_cast<int>(std::floor(sx + 0.5));
  int y = static_cast<int>(std::floor(sy + 0.5));
  x = std::min(std::max(x, 0), lm.w - 1);
  y = std::min(std::max(y, 0), lm.h - 1);
  return lm.at(y, x);
}

}  // namespace detail

// Warps image and labels with one shared coordinate field. For every
// destination pixel the source coordinate comes from the role-swapped MLS
// map; the image samples bilinearly, the labels by nearest neighbor.
template <typename T>
std::pair<Tensor4<T>, LabelMap> warp_pair(const Tensor4<T>& image,
                                          const LabelMap& labels,
                                          const DeformSpec& spec) {
  if (image.h != labels.h || image.w != labels.w)
    throw ShapeError("warp_pair: image " + image.shape_str() + " vs labels " +
                     std::to_string(labels.h) + "x" + std::to_string(labels.w));
  if (image.n != 1) throw ShapeError("warp_pair: expects a single image (n=1)");

  ControlPointSet cps = make_deform_control_points(image.h, image.w, spec);
  bool is_identity = true;
  for (std::size_t i = 0; i < cps.p.size() && is_identity; ++i)
    is_identity = cps.p[i].x == cps.q[i].x && cps.p[i].y == cps.q[i].y;
  if (is_identity) return {image, labels};

  // backward map: control pairs with roles swapped
  ControlPointSet inv{cps.q, cps.p, cps.alpha};

  Tensor4<T> out_img(image.n, image.c, image.h, image.w);
  LabelMap out_lab(labels.h, labels.w);
  for (int y = 0; y < image.h; ++y) {
    for (int x = 0; x < image.w; ++x) {
      const Point2 src = mls_affine_map(
          Point2{static_cast<double>(x), static_cast<double>(y)}, inv);
      for (int ch = 0; ch < image.c; ++ch)
        out_img.at(0, ch, y, x) =
            detail::sample_bilinear_clamped(image, 0, ch, src.x, src.y);
      out_lab.at(y, x) = detail::sample_nearest_clamped(labels, src.x, src.y);
    }
  }
  return {std::move(out_img), std::move(out_lab)};
}

// ---------------------------------------------------------------------------
// Conventional augmentation arm: random horizontal mirror, random resize in
// [0.75, 1.25] with center crop/pad back, random rotation in [-10, +10] deg.
// ---------------------------------------------------------------------------

struct CommonAugmentDraw {
  bool mirror = false;
  double scale = 1.0;
  double rotate_deg = 0.0;
};

inline CommonAugmentDraw draw_common_augment(Rng& rng) {
  CommonAugmentDraw d;
  d.mirror = rng.bernoulli(0.5);
  d.scale = rng.uniform(0.75, 1.25);
  d.rotate_deg = rng.uniform(-10.0, 10.0);
  return d;
}

template <typename T>
std::pair<Tensor4<T>, LabelMap> apply_common_augment(
    const Tensor4<T>& image, const LabelMap& labels,
    const CommonAugmentDraw& draw) {
  if (image.h != labels.h || image.w != labels.w)
    throw ShapeError("common_augment: image/label dims mismatch");
  Tensor4<T> img = image;
  LabelMap lab = labels;

  if (draw.mirror) {
    for (int ch = 0; ch < img.c; ++ch)
      for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w / 2; ++x)
          std::swap(img.at(0, ch, y, x), img.at(0, ch, y, img.w - 1 - x));
    for (int y = 0; y < lab.h; ++y)
      for (int x = 0; x < lab.w / 2; ++x)
        std::swap(lab.at(y, x), lab.at(y, lab.w - 1 - x));
  }

  const int nh = static_cast<int>(std::lround(img.h * draw.scale));
  const int nw = static_cast<int>(std::lround(img.w * draw.scale));
  if (nh != img.h || nw != img.w) {
    // resize content to (nh, nw), then paste centered into the original frame;
    // uncovered pixels get image 0 / label 0
    Tensor4<T> rimg(1, img.c, img.h, img.w, T(0));
    LabelMap rlab(lab.h, lab.w, 0);
    const int oy = (img.h - nh) / 2, ox = (img.w - nw) / 2;
    for (int y = 0; y < img.h; ++y) {
      const int ry = y - oy;
      if (ry < 0 || ry >= nh) continue;
      const double sy = (ry + 0.5) * (static_cast<double>(img.h) / nh) - 0.5;
      for (int x = 0; x < img.w; ++x) {
        const int rx = x - ox;
        if (rx < 0 || rx >= nw) continue;
        const double sx = (rx + 0.5) * (static_cast<double>(img.w) / nw) - 0.5;
        for (int ch = 0; ch < img.c; ++ch)
          rimg.at(0, ch, y, x) =
              detail::sample_bilinear_clamped(img, 0, ch, sx, sy);
        rlab.at(y, x) = detail::sample_nearest_clamped(lab, sx, sy);
      }
    }
    img = std::move(rimg);
    lab = std::move(rlab);
  }

  if (draw.rotate_deg != 0.0) {
    const double rad = draw.rotate_deg * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cx = (img.w - 1) * 0.5, cy = (img.h - 1) * 0.5;
    Tensor4<T> rimg(1, img.c, img.h, img.w, T(0));
    LabelMap rlab(lab.h, lab.w, 0);
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        // rotate by -theta to sample the source
        const double dx = x - cx, dy = y - cy;
        const double sx = cs * dx + sn * dy + cx;
        const double sy = -sn * dx + cs * dy + cy;
        if (sx < 0 || sx > img.w - 1 || sy < 0 || sy > img.h - 1) continue;
        for (int ch = 0; ch < img.c; ++ch)
          rimg.at(0, ch, y, x) =
              detail::sample_bilinear_clamped(img, 0, ch, sx, sy);
        rlab.at(y, x) = detail::sample_nearest_clamped(lab, sx, sy);
      }
    }
    img = std::move(rimg);
    lab = std::move(rlab);
  }
  return {std::move(img), std::move(lab)};
}

template <typename T>
std::pair<Tensor4<T>, LabelMap> common_augment(const Tensor4<T>& image,
                                               const LabelMap& labels,
                                               std::uint64_t seed) {
  Rng rng(seed);
  return apply_common_augment(image, labels, draw_common_augment(rng));
}

}  // namespace apnet
