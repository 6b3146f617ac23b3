#pragma once
// The standard gradient-check suite: every differentiable op under several
// configurations, the pyramid pooling layer, and the whole tiny model, each
// over a number of fixed random seeds. Used by the `gradcheck` subcommand
// and the verification tests.

#include <string>
#include <vector>

#include "apnet/attention.hpp"
#include "apnet/gradcheck.hpp"
#include "apnet/model.hpp"
#include "apnet/spp.hpp"

namespace apnet {

namespace detail {

inline std::uint64_t suite_seed(const std::string& name, int seed) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  return Rng::derive(h, static_cast<std::uint64_t>(seed));
}

inline ConvParams<double> random_conv(int out_c, int in_c, int k, int stride,
                                      int dilation, int padding, Rng& rng) {
  ConvParams<double> p;
  p.weight = make_tensor<double>(out_c, in_c, k, k);
  p.bias = make_tensor<double>(out_c, 1, 1, 1);
  p.stride = stride;
  p.dilation = dilation;
  p.padding = padding;
  fill_uniform(*p.weight, rng, -1.0, 1.0);
  fill_uniform(*p.bias, rng, -0.5, 0.5);
  return p;
}

inline std::vector<LabelMap> random_labels(int n, int h, int w, int classes,
                                           Rng& rng, double ignore_frac = 0.0,
                                           int ignore_value = 255) {
  std::vector<LabelMap> out;
  for (int i = 0; i < n; ++i) {
    LabelMap lm(h, w);
    for (auto& v : lm.ids)
      v = ignore_frac > 0 && rng.bernoulli(ignore_frac)
              ? static_cast<std::uint8_t>(ignore_value)
              : static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1));
    out.push_back(std::move(lm));
  }
  return out;
}

// Worst result across seeds, reported under one name.
template <typename MakeCheck>
GradCheckResult over_seeds(const std::string& name, int seeds, MakeCheck make) {
  GradCheckResult agg;
  agg.name = name;
  agg.pass = true;
  for (int s = 0; s < seeds; ++s) {
    GradCheckResult r = make(s);
    agg.tolerance = r.tolerance;
    if (r.max_rel_err > agg.max_rel_err) {
      agg.max_rel_err = r.max_rel_err;
      agg.worst_input = r.worst_input;
      agg.worst_elem = r.worst_elem;
    }
    agg.pass = agg.pass && r.pass;
  }
  return agg;
}

}  // namespace detail

inline std::vector<GradCheckResult> run_gradcheck_suite(int seeds = 10,
                                                        double tol = 1e-4) {
  using detail::over_seeds;
  using detail::random_conv;
  using detail::suite_seed;
  std::vector<GradCheckResult> results;

  auto conv_case = [&](const std::string& name, int n, int c, int h, int w,
                       int oc, int k, int stride, int dilation, int padding) {
    results.push_back(over_seeds(name, seeds, [&](int s) {
      Rng rng(suite_seed(name, s));
      auto x = make_tensor<double>(n, c, h, w);
      fill_uniform(*x, rng, -1.0, 1.0);
      auto p = random_conv(oc, c, k, stride, dilation, padding, rng);
      std::size_t out_n = conv2d<double>(nullptr, x, p)->numel();
      auto proj = random_projection(out_n, rng);
      auto build = [&x, &p, &proj](Tape<double>* tape) {
        return weighted_sum(tape, conv2d(tape, x, p), proj);
      };
      return grad_check(name, build, {x, p.weight, p.bias}, tol);
    }));
  };
  conv_case("conv2d 1x2x5x5 k3", 1, 2, 5, 5, 3, 3, 1, 1, 1);
  conv_case("conv2d 1x2x6x6 k3 s2", 1, 2, 6, 6, 2, 3, 2, 1, 1);
  conv_case("conv2d 1x1x8x8 k3 d2", 1, 1, 8, 8, 2, 3, 1, 2, 2);
  conv_case("conv2d 2x3x4x4 k1", 2, 3, 4, 4, 2, 1, 1, 1, 0);

  auto pool_case = [&](const std::string& name, int n, int c, int h, int w,
                       int kernel, int stride) {
    results.push_back(over_seeds(name, seeds, [&](int s) {
      Rng rng(suite_seed(name, s));
      auto x = make_tensor<double>(n, c, h, w);
      fill_uniform(*x, rng, -1.0, 1.0);
      std::size_t out_n = avg_pool_clipped<double>(nullptr, x, kernel, stride)
                              ->numel();
      auto proj = random_projection(out_n, rng);
      auto build = [&x, kernel, stride, &proj](Tape<double>* tape) {
        return weighted_sum(tape, avg_pool_clipped(tape, x, kernel, stride),
                            proj);
      };
      return grad_check(name, build, {x}, tol);
    }));
  };
  pool_case("avg_pool 1x1x10x10 k4 s4", 1, 1, 10, 10, 4, 4);
  pool_case("avg_pool 1x2x7x7 k3 s2", 1, 2, 7, 7, 3, 2);
  pool_case("avg_pool 1x1x5x5 k7 s3", 1, 1, 5, 5, 7, 3);

  auto resize_case = [&](const std::string& name, int h, int w, int oh,
                         int ow) {
    results.push_back(over_seeds(name, seeds, [&](int s) {
      Rng rng(suite_seed(name, s));
      auto x = make_tensor<double>(1, 2, h, w);
      fill_uniform(*x, rng, -1.0, 1.0);
      auto proj = random_projection(static_cast<std::size_t>(2) * oh * ow, rng);
      auto build = [&x, oh, ow, &proj](Tape<double>* tape) {
        return weighted_sum(tape, bilinear_resize(tape, x, oh, ow), proj);
      };
      return grad_check(name, build, {x}, tol);
    }));
  };
  resize_case("bilinear_resize 3x3 -> 7x7", 3, 3, 7, 7);
  resize_case("bilinear_resize 7x7 -> 3x3", 7, 7, 3, 3);
  resize_case("bilinear_resize 4x4 -> 4x4", 4, 4, 4, 4);

  results.push_back(over_seeds("concat_channels x3", seeds, [&](int s) {
    Rng rng(suite_seed("concat", s));
    std::vector<TensorPtr<double>> xs = {make_tensor<double>(1, 2, 4, 4),
                                         make_tensor<double>(1, 1, 4, 4),
                                         make_tensor<double>(1, 3, 4, 4)};
    for (auto& x : xs) fill_uniform(*x, rng, -1.0, 1.0);
    auto proj = random_projection(6 * 16, rng);
    auto build = [&xs, &proj](Tape<double>* tape) {
      return weighted_sum(tape, concat_channels(tape, xs), proj);
    };
    return grad_check("concat_channels x3", build, xs, tol);
  }));

  results.push_back(over_seeds("relu 1x2x5x5", seeds, [&](int s) {
    Rng rng(suite_seed("relu", s));
    auto x = make_tensor<double>(1, 2, 5, 5);
    // keep values away from the kink so central differences stay valid
    for (auto& v : x->data)
      v = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.05, 1.0);
    auto proj = random_projection(x->numel(), rng);
    auto build = [&x, &proj](Tape<double>* tape) {
      return weighted_sum(tape, relu(tape, x), proj);
    };
    return grad_check("relu 1x2x5x5", build, {x}, tol);
  }));

  results.push_back(over_seeds("add 1x2x3x3", seeds, [&](int s) {
    Rng rng(suite_seed("add", s));
    auto a = make_tensor<double>(1, 2, 3, 3);
    auto b = make_tensor<double>(1, 2, 3, 3);
    fill_uniform(*a, rng, -1.0, 1.0);
    fill_uniform(*b, rng, -1.0, 1.0);
    auto proj = random_projection(a->numel(), rng);
    auto build = [&a, &b, &proj](Tape<double>* tape) {
      return weighted_sum(tape, add(tape, a, b), proj);
    };
    return grad_check("add 1x2x3x3", build, {a, b}, tol);
  }));

  auto ce_case = [&](const std::string& name, double ignore_frac) {
    results.push_back(over_seeds(name, seeds, [&](int s) {
      Rng rng(suite_seed(name, s));
      auto x = make_tensor<double>(2, 3, 4, 4);
      fill_uniform(*x, rng, -2.0, 2.0);
      auto labels = detail::random_labels(2, 4, 4, 3, rng, ignore_frac);
      auto build = [&x, &labels](Tape<double>* tape) {
        return softmax_cross_entropy(tape, x, labels, 255);
      };
      return grad_check(name, build, {x}, tol);
    }));
  };
  ce_case("softmax_ce 2x3x4x4", 0.0);
  ce_case("softmax_ce ignore=255", 0.3);

  results.push_back(over_seeds("attention_fuse S=3", seeds, [&](int s) {
    Rng rng(suite_seed("fuse", s));
    std::vector<TensorPtr<double>> maps;
    for (int i = 0; i < 3; ++i) {
      maps.push_back(make_tensor<double>(1, 2, 4, 4));
      fill_uniform(*maps.back(), rng, -1.0, 1.0);
    }
    auto logits = make_tensor<double>(1, 1, 1, 3);
    fill_uniform(*logits, rng, -1.0, 1.0);
    auto proj = random_projection(maps[0]->numel(), rng);
    auto build = [&maps, &logits, &proj](Tape<double>* tape) {
      return weighted_sum(tape, attention_combine(tape, maps, logits), proj);
    };
    return grad_check("attention_fuse S=3", build,
                      {maps[0], maps[1], maps[2], logits}, tol);
  }));

  results.push_back(over_seeds("spp_layer n=6 levels{1,2,3}", seeds, [&](int s) {
    Rng rng(suite_seed("spp", s));
    SppConfig cfg{{1, 2, 3}, 2, 1};
    auto feat = make_tensor<double>(1, 2, 6, 6);
    fill_uniform(*feat, rng, -1.0, 1.0);
    std::vector<ConvParams<double>> convs;
    std::vector<TensorPtr<double>> inputs{feat};
    for (int i = 0; i < 3; ++i) {
      convs.push_back(random_conv(1, 2, 1, 1, 1, 0, rng));
      inputs.push_back(convs.back().weight);
      inputs.push_back(convs.back().bias);
    }
    auto proj = random_projection(static_cast<std::size_t>(2 + 3) * 36, rng);
    auto build = [&feat, &cfg, &convs, &proj](Tape<double>* tape) {
      return weighted_sum(tape, spp_forward(tape, feat, cfg, convs), proj);
    };
    return grad_check("spp_layer n=6 levels{1,2,3}", build, inputs, tol);
  }));

  results.push_back(over_seeds("apnet tiny model", seeds, [&](int s) {
    Rng rng(suite_seed("model", s));
    ApnetConfig cfg;
    cfg.input_size = 16;
    cfg.backbone_channels = {2, 2, 2};
    cfg.spp_levels = {1, 2};
    cfg.scales = {1.0, 0.5};
    cfg.num_classes = 3;
    auto params = init_params<double>(cfg, suite_seed("model-params", s));
    // check at a generic random point: zero-initialized biases put dead ReLU
    // units exactly on the kink, where the loss is not differentiable
    std::vector<TensorPtr<double>> inputs;
    for (auto& r : params.refs()) {
      fill_uniform(*r.tensor, rng, -0.6, 0.6);
      inputs.push_back(r.tensor);
    }
    auto img = make_tensor<double>(1, 1, 16, 16);
    fill_uniform(*img, rng, 0.0, 1.0);
    auto labels = detail::random_labels(1, 16, 16, 3, rng);
    inputs.insert(inputs.begin(), img);
    auto build = [&img, &params, &cfg, &labels](Tape<double>* tape) {
      auto fwd = apnet_forward(tape, img, params, cfg);
      return deep_supervision_loss(tape, fwd.outputs, fwd.fused, labels);
    };
    return grad_check("apnet tiny model", build, inputs, tol);
  }));

  return results;
}

inline std::string format_gradcheck_table(
    const std::vector<GradCheckResult>& results) {
  std::string out;
  std::size_t name_w = 4;
  for (const auto& r : results) name_w = std::max(name_w, r.name.size());
  for (const auto& r : results) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-*s  max_rel_err %.3e  %s\n",
                  static_cast<int>(name_w), r.name.c_str(), r.max_rel_err,
                  r.pass ? "ok" : "FAIL");
    out += buf;
  }
  return out;
}

}  // namespace apnet
