#include <catch2/catch_amalgamated.hpp>

#include "apnet/spp.hpp"

using namespace apnet;

namespace {

// independent window enumeration: starts at multiples of stride below n
int count_windows(int n, int stride) {
  int count = 0;
  for (int start = 0; start < n; start += stride) ++count;
  return count;
}

std::vector<ConvParams<double>> identity_like_convs(const SppConfig& cfg) {
  // weights of each 1x1 conv sum to 1 per output channel, zero bias
  std::vector<ConvParams<double>> convs;
  const int red = spp_resolved_reduced(cfg);
  for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
    ConvParams<double> p;
    p.weight = make_tensor<double>(red, cfg.in_channels, 1, 1,
                                   1.0 / cfg.in_channels);
    p.bias = make_tensor<double>(red, 1, 1, 1);
    convs.push_back(std::move(p));
  }
  return convs;
}

}  // namespace

TEST_CASE("spp_bin_geometry matches the ceiling rule") {
  SECTION("exact division: (24, 6) -> kernel 4, stride 4, 6 bins") {
    auto g = spp_bin_geometry(24, 6);
    REQUIRE(g.kernel == 4);
    REQUIRE(g.stride == 4);
    REQUIRE(g.out == 6);
  }
  SECTION("(10, 3) -> kernel 4 with starts 0, 4, 8") {
    auto g = spp_bin_geometry(10, 3);
    REQUIRE(g.kernel == 4);
    REQUIRE(g.stride == 4);
    REQUIRE(g.out == 3);
  }
  SECTION("bin-count drift: (7, 6) -> kernel 2, 4 bins, not 6") {
    auto g = spp_bin_geometry(7, 6);
    REQUIRE(g.kernel == 2);
    REQUIRE(g.stride == 2);
    REQUIRE(g.out == 4);
  }
  SECTION("exhaustive n <= 48 against hand enumeration") {
    for (int n = 1; n <= 48; ++n)
      for (int l : {1, 2, 3, 6}) {
        auto g = spp_bin_geometry(n, l);
        REQUIRE(g.kernel == (n + l - 1) / l);
        REQUIRE(g.stride == g.kernel);
        REQUIRE(g.out == count_windows(n, g.stride));
        if (n % l == 0) REQUIRE(g.out == l);  // exact division recovers l bins
      }
  }
}

TEST_CASE("spp paper geometry: n=24 levels {1,2,3,6} pool to 1,2,3,6 bins") {
  const int kernels[] = {24, 12, 8, 4};
  const int levels[] = {1, 2, 3, 6};
  for (int i = 0; i < 4; ++i) {
    auto g = spp_bin_geometry(24, levels[i]);
    REQUIRE(g.kernel == kernels[i]);
    REQUIRE(g.out == levels[i]);
  }
}

TEST_CASE("spp_forward output shape: channels C + L*C_red, spatial unchanged") {
  Rng rng(4);
  SppConfig cfg{{1, 2, 3, 6}, 8, 2};
  auto feat = make_tensor<double>(2, 8, 12, 12);
  fill_uniform(*feat, rng, -1.0, 1.0);
  std::vector<ConvParams<double>> convs;
  for (int i = 0; i < 4; ++i) {
    ConvParams<double> p;
    p.weight = make_tensor<double>(2, 8, 1, 1);
    p.bias = make_tensor<double>(2, 1, 1, 1);
    fill_uniform(*p.weight, rng, -1.0, 1.0);
    convs.push_back(std::move(p));
  }
  auto out = spp_forward<double>(nullptr, feat, cfg, convs);
  REQUIRE(out->c == 8 + 4 * 2);
  REQUIRE(out->h == 12);
  REQUIRE(out->w == 12);
  REQUIRE(out->n == 2);
}

TEST_CASE("spp_forward with zero level convs degrades to passthrough + zeros") {
  Rng rng(6);
  SppConfig cfg{{1, 2}, 3, 0};  // reduced auto = 1
  auto feat = make_tensor<double>(1, 3, 6, 6);
  fill_uniform(*feat, rng, -1.0, 1.0);
  std::vector<ConvParams<double>> convs;
  for (int i = 0; i < 2; ++i) {
    ConvParams<double> p;
    p.weight = make_tensor<double>(1, 3, 1, 1);
    p.bias = make_tensor<double>(1, 1, 1, 1);
    convs.push_back(std::move(p));
  }
  auto out = spp_forward<double>(nullptr, feat, cfg, convs);
  auto parts = split_channels(out, {3, 1, 1});
  REQUIRE(parts[0]->data == feat->data);
  for (double v : parts[1]->data) REQUIRE(v == 0.0);
  for (double v : parts[2]->data) REQUIRE(v == 0.0);
}

TEST_CASE("spp_forward propagates a constant feature to constant branches") {
  const double c = 0.625;  // dyadic: pooling and resizing stay exact
  SppConfig cfg{{1, 2, 3}, 4, 0};  // reduced auto = 1
  auto feat = make_tensor<double>(1, 4, 10, 10, c);
  auto convs = identity_like_convs(cfg);
  auto out = spp_forward<double>(nullptr, feat, cfg, convs);
  REQUIRE(out->c == 4 + 3);
  for (double v : out->data) REQUIRE(v == Catch::Approx(c).margin(1e-12));
}

TEST_CASE("spp_forward rejects non-square features") {
  SppConfig cfg{{1, 2}, 2, 1};
  auto feat = make_tensor<double>(1, 2, 4, 6);
  std::vector<ConvParams<double>> convs(2);
  for (auto& p : convs) {
    p.weight = make_tensor<double>(1, 2, 1, 1);
    p.bias = make_tensor<double>(1, 1, 1, 1);
  }
  REQUIRE_THROWS_AS(spp_forward<double>(nullptr, feat, cfg, convs), ShapeError);
}

TEST_CASE("spp config validation") {
  REQUIRE_THROWS_AS(validate_spp_config(SppConfig{{}, 4, 1}), ConfigError);
  REQUIRE_THROWS_AS(validate_spp_config(SppConfig{{2, 2}, 4, 1}), ConfigError);
  REQUIRE_THROWS_AS(validate_spp_config(SppConfig{{3, 1}, 4, 1}), ConfigError);
  REQUIRE_NOTHROW(validate_spp_config(SppConfig{{1, 2, 3, 6}, 4, 0}));
  // auto reduction: C/L floored, at least 1
  REQUIRE(spp_resolved_reduced(SppConfig{{1, 2, 3, 6}, 8, 0}) == 2);
  REQUIRE(spp_resolved_reduced(SppConfig{{1, 2, 3, 6}, 2, 0}) == 1);
}
