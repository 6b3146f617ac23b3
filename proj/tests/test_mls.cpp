#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "apnet/mls.hpp"

using namespace apnet;

namespace {

ControlPointSet random_cps(int count, double span, Rng& rng) {
  ControlPointSet cps;
  for (int i = 0; i < count; ++i) {
    Point2 p{rng.uniform(0.0, span), rng.uniform(0.0, span)};
    cps.p.push_back(p);
    cps.q.push_back(p);
  }
  return cps;
}

Tensor4<float> ramp_image(int side) {
  Tensor4<float> img(1, 1, side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      img.at(0, 0, y, x) = static_cast<float>((y * side + x) % 97) / 96.0f;
  return img;
}

LabelMap stripes(int side) {
  LabelMap lm(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      lm.at(y, x) = static_cast<std::uint8_t>((x / 4) % 3);
  return lm;
}

}  // namespace

TEST_CASE("mls identity: q = p maps every point to itself") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto cps = random_cps(3 + trial % 6, 40.0, rng);
    for (int i = 0; i < 15; ++i) {
      Point2 v{rng.uniform(-5.0, 45.0), rng.uniform(-5.0, 45.0)};
      Point2 f = mls_affine_map(v, cps);
      REQUIRE(f.x == Catch::Approx(v.x).margin(1e-9));
      REQUIRE(f.y == Catch::Approx(v.y).margin(1e-9));
    }
  }
}

TEST_CASE("mls reproduces a pure translation everywhere") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto cps = random_cps(4 + trial % 5, 32.0, rng);
    const Point2 t{rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0)};
    for (auto& q : cps.q) {
      q.x += t.x;
      q.y += t.y;
    }
    for (int y = 0; y <= 32; y += 4)
      for (int x = 0; x <= 32; x += 4) {
        Point2 f = mls_affine_map({double(x), double(y)}, cps);
        REQUIRE(f.x == Catch::Approx(x + t.x).margin(1e-6));
        REQUIRE(f.y == Catch::Approx(y + t.y).margin(1e-6));
      }
  }
}

TEST_CASE("mls interpolates control points in the near-coincidence limit") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    ControlPointSet cps = random_cps(5, 24.0, rng);
    for (auto& q : cps.q) {
      q.x += rng.uniform(-2.0, 2.0);
      q.y += rng.uniform(-2.0, 2.0);
    }
    const std::size_t i = trial % cps.p.size();
    Point2 v{cps.p[i].x + 1e-9, cps.p[i].y};
    Point2 f = mls_affine_map(v, cps);
    REQUIRE(f.x == Catch::Approx(cps.q[i].x).margin(1e-5));
    REQUIRE(f.y == Catch::Approx(cps.q[i].y).margin(1e-5));
  }
}

TEST_CASE("mls on exactly coincident points returns the paired target") {
  ControlPointSet cps;
  cps.p = {{0, 0}, {10, 0}, {0, 10}, {10, 10}};
  cps.q = {{1, 2}, {11, 1}, {-1, 12}, {10, 10}};
  Point2 f = mls_affine_map({10, 0}, cps);
  REQUIRE(f.x == 11.0);
  REQUIRE(f.y == 1.0);
}

TEST_CASE("mls rejects collinear control points as singular") {
  ControlPointSet cps;
  cps.p = {{0, 0}, {5, 5}, {10, 10}, {15, 15}};
  cps.q = cps.p;
  REQUIRE_THROWS_AS(mls_affine_map({3.0, 7.0}, cps), NumericError);
}

TEST_CASE("mls validates its control point set") {
  ControlPointSet two;
  two.p = {{0, 0}, {1, 1}};
  two.q = two.p;
  REQUIRE_THROWS_AS(mls_affine_map({0.5, 0.5}, two), ArgumentError);
  ControlPointSet ragged;
  ragged.p = {{0, 0}, {1, 0}, {0, 1}};
  ragged.q = {{0, 0}, {1, 0}};
  REQUIRE_THROWS_AS(mls_affine_map({0.5, 0.5}, ragged), ArgumentError);
}

TEST_CASE("warp_pair with zero displacement is the exact identity") {
  auto img = ramp_image(24);
  auto lab = stripes(24);
  DeformSpec zero;
  zero.max_displacement = 0.0;
  zero.seed = 5;
  auto out = warp_pair(img, lab, zero);
  REQUIRE(out.first.data == img.data);
  REQUIRE(out.second == lab);
}

TEST_CASE("warp_pair with a uniform translation shifts content") {
  const int side = 32;
  auto img = ramp_image(side);
  LabelMap lab(side, side, 0);
  for (int y = 10; y < 20; ++y)
    for (int x = 10; x < 20; ++x) lab.at(y, x) = 1;

  // all control targets shifted by t = (+3, 0): content moves right by 3
  ControlPointSet cps;
  const int g = 4;
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      Point2 p{(side - 1.0) * gx / (g - 1), (side - 1.0) * gy / (g - 1)};
      cps.p.push_back(p);
      cps.q.push_back({p.x + 3.0, p.y});
    }
  ControlPointSet inv{cps.q, cps.p, cps.alpha};

  LabelMap shifted(side, side, 0);
  Tensor4<float> shifted_img(1, 1, side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const Point2 src = mls_affine_map({double(x), double(y)}, inv);
      shifted.at(y, x) = detail::sample_nearest_clamped(lab, src.x, src.y);
      shifted_img.at(0, 0, y, x) =
          detail::sample_bilinear_clamped(img, 0, 0, src.x, src.y);
    }
  // away from borders the backward-sampled result equals an integer shift
  for (int y = 4; y < side - 4; ++y)
    for (int x = 4; x < side - 4; ++x) {
      REQUIRE(int(shifted.at(y, x)) == int(lab.at(y, x - 3)));
      REQUIRE(shifted_img.at(0, 0, y, x) ==
              Catch::Approx(img.at(0, 0, y, x - 3)).margin(1e-5));
    }
}

TEST_CASE("warp_pair is deterministic for a fixed seed") {
  auto img = ramp_image(32);
  auto lab = stripes(32);
  DeformSpec spec;
  spec.seed = 99;
  auto a = warp_pair(img, lab, spec);
  auto b = warp_pair(img, lab, spec);
  REQUIRE(a.first.data == b.first.data);
  REQUIRE(a.second == b.second);
  DeformSpec other = spec;
  other.seed = 100;
  auto c = warp_pair(img, lab, other);
  REQUIRE(a.second.ids != c.second.ids);
}

TEST_CASE("warp_pair never invents label classes") {
  auto img = ramp_image(32);
  LabelMap lab(32, 32, 0);
  for (int y = 6; y < 14; ++y)
    for (int x = 20; x < 28; ++x) lab.at(y, x) = 4;
  DeformSpec spec;
  spec.seed = 7;
  auto out = warp_pair(img, lab, spec);
  for (auto v : out.second.ids) REQUIRE((v == 0 || v == 4));
}

TEST_CASE("warp_pair label and one-hot image warps are argmax-consistent") {
  const int side = 32;
  auto lab = stripes(side);
  const int classes = 3;
  Tensor4<float> onehot(1, classes, side, side, 0.0f);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) onehot.at(0, lab.at(y, x), y, x) = 1.0f;

  DeformSpec spec;
  spec.seed = 13;
  auto warped_lab = warp_pair(onehot, lab, spec).second;
  auto warped_img = warp_pair(onehot, lab, spec).first;

  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      // only check pixels whose four bilinear neighbors agree on the class
      float best = -1;
      int arg = -1;
      bool pure = false;
      for (int c = 0; c < classes; ++c) {
        const float v = warped_img.at(0, c, y, x);
        if (v > best) {
          best = v;
          arg = c;
        }
        if (v == 1.0f) pure = true;
      }
      if (pure) REQUIRE(arg == int(warped_lab.at(y, x)));
    }
}

TEST_CASE("deform spec rejects displacement at or beyond half spacing") {
  auto img = ramp_image(32);
  auto lab = stripes(32);
  DeformSpec spec;
  spec.grid = 4;
  spec.max_displacement = 6.0;  // spacing (32-1)/3 = 10.33, half = 5.17
  REQUIRE_THROWS_AS(warp_pair(img, lab, spec), ArgumentError);
}

TEST_CASE("common augment: identity draw leaves the pair unchanged") {
  auto img = ramp_image(24);
  auto lab = stripes(24);
  CommonAugmentDraw id;  // mirror=false, scale=1, rotate=0
  auto out = apply_common_augment(img, lab, id);
  REQUIRE(out.first.data == img.data);
  REQUIRE(out.second == lab);
}

TEST_CASE("common augment: mirror-only draw swaps label columns") {
  auto img = ramp_image(24);
  auto lab = stripes(24);
  CommonAugmentDraw d;
  d.mirror = true;
  auto out = apply_common_augment(img, lab, d);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      REQUIRE(int(out.second.at(y, x)) == int(lab.at(y, 23 - x)));
      REQUIRE(out.first.at(0, 0, y, x) == img.at(0, 0, y, 23 - x));
    }
}

TEST_CASE("common augment is seed-deterministic") {
  auto img = ramp_image(24);
  auto lab = stripes(24);
  auto a = common_augment(img, lab, 5);
  auto b = common_augment(img, lab, 5);
  REQUIRE(a.first.data == b.first.data);
  REQUIRE(a.second == b.second);
}
