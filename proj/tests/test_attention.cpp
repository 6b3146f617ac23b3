#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "apnet/attention.hpp"
#include "apnet/gradcheck.hpp"

using namespace apnet;

TEST_CASE("attention weights initialize to exactly 1/S") {
  for (int S : {1, 2, 3, 5}) {
    auto w = AttentionWeights<double>::zeros(S);
    const auto lam = w.lambdas();
    for (double v : lam) REQUIRE(v == 1.0 / S);
  }
}

TEST_CASE("fuse with a single scale returns that map bit-exactly") {
  Rng rng(2);
  ScaleOutputs<double> out;
  out.scales = {1.0};
  out.score_maps = {make_tensor<double>(1, 3, 4, 4)};
  fill_uniform(*out.score_maps[0], rng, -2.0, 2.0);
  auto w = AttentionWeights<double>::zeros(1);
  w.logits->data[0] = 1.7;  // any logit: softmax of a singleton is 1
  auto fused = fuse<double>(nullptr, out, w);
  REQUIRE(fused->data == out.score_maps[0]->data);
}

TEST_CASE("fuse evaluates the weighted sum of constant maps") {
  // logits ln(0.5), ln(0.3), ln(0.2) give lambdas (0.5, 0.3, 0.2)
  ScaleOutputs<double> out;
  out.scales = {1.0, 0.75, 0.5};
  for (double v : {1.0, 2.0, 3.0})
    out.score_maps.push_back(make_tensor<double>(1, 1, 4, 4, v));
  auto w = AttentionWeights<double>::zeros(3);
  w.logits->data = {std::log(0.5), std::log(0.3), std::log(0.2)};
  auto fused = fuse<double>(nullptr, out, w);
  for (double v : fused->data)
    REQUIRE(v == Catch::Approx(0.5 * 1 + 0.3 * 2 + 0.2 * 3).epsilon(1e-12));
}

TEST_CASE("fuse resizes smaller maps up to the full-scale resolution") {
  ScaleOutputs<double> out;
  out.scales = {1.0, 0.5};
  out.score_maps = {make_tensor<double>(1, 2, 6, 6, 1.0),
                    make_tensor<double>(1, 2, 3, 3, 3.0)};
  auto w = AttentionWeights<double>::zeros(2);
  auto fused = fuse<double>(nullptr, out, w);
  REQUIRE(fused->h == 6);
  for (double v : fused->data) REQUIRE(v == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("fuse is permutation-equivariant") {
  Rng rng(8);
  ScaleOutputs<double> a;
  a.scales = {1.0, 0.75, 0.5};
  for (int i = 0; i < 3; ++i) {
    const int side = 8 - 2 * i;
    a.score_maps.push_back(make_tensor<double>(1, 2, side, side));
    fill_uniform(*a.score_maps.back(), rng, -1.0, 1.0);
  }
  auto wa = AttentionWeights<double>::zeros(3);
  wa.logits->data = {0.3, -0.8, 1.1};
  auto fa = fuse<double>(nullptr, a, wa);

  // permute (scales, maps, logits) together: order (2, 0, 1)
  ScaleOutputs<double> b;
  b.scales = {a.scales[2], a.scales[0], a.scales[1]};
  b.score_maps = {a.score_maps[2], a.score_maps[0], a.score_maps[1]};
  auto wb = AttentionWeights<double>::zeros(3);
  wb.logits->data = {wa.logits->data[2], wa.logits->data[0],
                     wa.logits->data[1]};
  auto fb = fuse<double>(nullptr, b, wb);
  for (std::size_t i = 0; i < fa->numel(); ++i)
    REQUIRE(fa->data[i] == Catch::Approx(fb->data[i]).margin(1e-12));
}

TEST_CASE("adding a constant to all logits leaves lambdas and fusion unchanged") {
  // exactly representable logits and shift, so the max-subtraction softmax
  // computes identical intermediate values
  ScaleOutputs<float> out;
  out.scales = {1.0, 0.75, 0.5};
  Rng rng(4);
  for (int i = 0; i < 3; ++i) {
    out.score_maps.push_back(make_tensor<float>(1, 2, 4, 4));
    fill_uniform(*out.score_maps.back(), rng, -1.0, 1.0);
  }
  auto w1 = AttentionWeights<float>::zeros(3);
  w1.logits->data = {0.25f, -0.5f, 1.0f};
  auto w2 = AttentionWeights<float>::zeros(3);
  w2.logits->data = {0.25f + 0.5f, -0.5f + 0.5f, 1.0f + 0.5f};
  REQUIRE(w1.lambdas() == w2.lambdas());
  auto f1 = fuse<float>(nullptr, out, w1);
  auto f2 = fuse<float>(nullptr, out, w2);
  REQUIRE(f1->data == f2->data);
}

TEST_CASE("fuse rejects an empty score-map list") {
  ScaleOutputs<double> out;
  auto w = AttentionWeights<double>::zeros(1);
  REQUIRE_THROWS_AS(fuse<double>(nullptr, out, w), ArgumentError);
}

TEST_CASE("deep supervision: uniform logits cost (1+S) ln C") {
  const int S = 3, C = 4;
  ScaleOutputs<double> out;
  out.scales = {1.0, 0.75, 0.5};
  for (int side : {6, 4, 3})
    out.score_maps.push_back(make_tensor<double>(1, C, side, side, 0.2));
  auto w = AttentionWeights<double>::zeros(S);
  auto fused = fuse<double>(nullptr, out, w);
  std::vector<LabelMap> gt{LabelMap(24, 24, 2)};
  auto loss = deep_supervision_loss<double>(nullptr, out, fused, gt);
  REQUIRE(loss->data[0] ==
          Catch::Approx((1 + S) * std::log(double(C))).epsilon(1e-14));
}

TEST_CASE("deep supervision: near-one-hot maps at every scale cost ~0") {
  ScaleOutputs<double> out;
  out.scales = {1.0, 0.5};
  std::vector<LabelMap> gt{LabelMap(16, 16, 1)};
  for (int side : {4, 2}) {
    auto m = make_tensor<double>(1, 3, side, side, 0.0);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) m->at(0, 1, y, x) = 60.0;
    out.score_maps.push_back(m);
  }
  auto w = AttentionWeights<double>::zeros(2);
  auto fused = fuse<double>(nullptr, out, w);
  auto loss = deep_supervision_loss<double>(nullptr, out, fused, gt);
  REQUIRE(loss->data[0] < 1e-12);
}

TEST_CASE("deep supervision with S=1 and aux disabled is plain cross entropy") {
  Rng rng(12);
  ScaleOutputs<double> out;
  out.scales = {1.0};
  out.score_maps = {make_tensor<double>(1, 3, 4, 4)};
  fill_uniform(*out.score_maps[0], rng, -1.0, 1.0);
  LabelMap gt(16, 16);
  for (auto& v : gt.ids) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
  auto w = AttentionWeights<double>::zeros(1);
  auto fused = fuse<double>(nullptr, out, w);
  auto got = deep_supervision_loss<double>(nullptr, out, fused, {gt}, {},
                                           /*include_per_scale=*/false);
  auto up = bilinear_resize<double>(nullptr, out.score_maps[0], 16, 16);
  auto want = softmax_cross_entropy<double>(nullptr, up, {gt});
  REQUIRE(got->data[0] == want->data[0]);
}

TEST_CASE("loss gradient w.r.t. logits matches finite differences") {
  Rng rng(21);
  std::vector<TensorPtr<double>> maps;
  for (int i = 0; i < 3; ++i) {
    maps.push_back(make_tensor<double>(1, 3, 4, 4));
    fill_uniform(*maps.back(), rng, -1.0, 1.0);
  }
  auto logits = make_tensor<double>(1, 1, 1, 3);
  fill_uniform(*logits, rng, -1.0, 1.0);
  LabelMap gt(4, 4);
  for (auto& v : gt.ids) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
  auto build = [&](Tape<double>* tape) {
    auto fused = attention_combine(tape, maps, logits);
    return softmax_cross_entropy(tape, fused, {gt});
  };
  auto r = grad_check("dLoss/dlogits", build, {logits}, 1e-4);
  INFO("max_rel_err=" << r.max_rel_err);
  REQUIRE(r.pass);
}

TEST_CASE("lambdas always sum to 1 and stay positive") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    auto w = AttentionWeights<double>::zeros(4);
    fill_uniform(*w.logits, rng, -30.0, 30.0);
    const auto lam = w.lambdas();
    double sum = 0;
    for (double v : lam) {
      REQUIRE(v > 0.0);
      sum += v;
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
  }
}
