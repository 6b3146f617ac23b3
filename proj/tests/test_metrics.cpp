#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "apnet/metrics.hpp"

using namespace apnet;

namespace {

// brute-force oracle: per-class pixel set counting straight off the label
// maps, no confusion matrix involved
struct BruteMetrics {
  std::vector<double> iou;  // NaN = absent
  double miou;
  double pixel_acc;
};

BruteMetrics brute_force(const LabelMap& gt, const LabelMap& pred, int classes,
                         std::optional<int> ignore = {}) {
  BruteMetrics out;
  std::int64_t correct = 0, total = 0;
  for (int c = 0; c < classes; ++c) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (int y = 0; y < gt.h; ++y)
      for (int x = 0; x < gt.w; ++x) {
        if (ignore && gt.at(y, x) == *ignore) continue;
        const bool g = gt.at(y, x) == c, p = pred.at(y, x) == c;
        if (g && p) ++tp;
        if (!g && p) ++fp;
        if (g && !p) ++fn;
      }
    out.iou.push_back(tp + fp + fn > 0
                          ? double(tp) / double(tp + fp + fn)
                          : std::numeric_limits<double>::quiet_NaN());
  }
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x) {
      if (ignore && gt.at(y, x) == *ignore) continue;
      ++total;
      if (gt.at(y, x) == pred.at(y, x)) ++correct;
    }
  double sum = 0;
  int present = 0;
  for (double v : out.iou)
    if (!std::isnan(v)) {
      sum += v;
      ++present;
    }
  out.miou = sum / present;
  out.pixel_acc = double(correct) / double(total);
  return out;
}

}  // namespace

TEST_CASE("perfect prediction gives a diagonal matrix and all-ones metrics") {
  Rng rng(1);
  LabelMap gt(6, 6);
  for (auto& v : gt.ids) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
  ConfusionMatrix cm(3);
  accumulate(cm, gt, gt);
  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p)
      if (g != p) REQUIRE(cm.at(g, p) == 0);
  for (double v : iou_per_class(cm)) REQUIRE(v == 1.0);
  REQUIRE(mean_iou(cm) == 1.0);
  REQUIRE(pixel_accuracy(cm) == 1.0);
}

TEST_CASE("hand-counted 2x2 fixture") {
  LabelMap gt(2, 2), pred(2, 2);
  gt.ids = {0, 0, 1, 1};
  pred.ids = {0, 1, 1, 1};
  ConfusionMatrix cm(2);
  accumulate(cm, gt, pred);
  REQUIRE(cm.at(0, 0) == 1);
  REQUIRE(cm.at(0, 1) == 1);
  REQUIRE(cm.at(1, 0) == 0);
  REQUIRE(cm.at(1, 1) == 2);

  const auto iou = iou_per_class(cm);
  REQUIRE(iou[0] == 0.5);
  REQUIRE(iou[1] == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
  REQUIRE(mean_iou(cm) == Catch::Approx(7.0 / 12.0).epsilon(1e-15));
  REQUIRE(pixel_accuracy(cm) == 0.75);

  const auto rep = report(cm);
  const auto text = format_report_text(rep);
  REQUIRE(text.find("50.00") != std::string::npos);
  REQUIRE(text.find("66.67") != std::string::npos);
  REQUIRE(text.find("mIoU     58.33") != std::string::npos);
  REQUIRE(text.find("PixelAcc 75.00") != std::string::npos);
}

TEST_CASE("all-ignored input leaves the matrix unchanged") {
  LabelMap gt(3, 3, 255), pred(3, 3, 1);
  ConfusionMatrix cm(2);
  accumulate(cm, gt, pred, 255);
  REQUIRE(cm.total() == 0);
}

TEST_CASE("out-of-range class reports pixel coordinates") {
  LabelMap gt(2, 2, 0), pred(2, 2, 0);
  gt.at(0, 1) = 9;
  ConfusionMatrix cm(3);
  REQUIRE_THROWS_MATCHES(accumulate(cm, gt, pred), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("(0,1)")));
}

TEST_CASE("absent classes are excluded from the mean") {
  LabelMap gt(2, 2, 0), pred(2, 2, 0);
  ConfusionMatrix cm(4);  // classes 1..3 never appear
  accumulate(cm, gt, pred);
  const auto iou = iou_per_class(cm);
  REQUIRE(iou[0] == 1.0);
  for (int c = 1; c < 4; ++c) REQUIRE(std::isnan(iou[c]));
  REQUIRE(mean_iou(cm) == 1.0);
  const auto text = format_report_text(report(cm));
  REQUIRE(text.find("absent") != std::string::npos);
}

TEST_CASE("empty matrix metrics are undefined errors") {
  ConfusionMatrix cm(3);
  REQUIRE_THROWS_AS(mean_iou(cm), DataError);
  REQUIRE_THROWS_AS(pixel_accuracy(cm), DataError);
}

TEST_CASE("confusion-matrix metrics equal brute-force counting exactly") {
  Rng rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const int h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8);
    const int classes = rng.uniform_int(2, 5);
    LabelMap gt(h, w), pred(h, w);
    const bool with_ignore = rng.bernoulli(0.3);
    for (auto& v : gt.ids)
      v = with_ignore && rng.bernoulli(0.1)
              ? 255
              : static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1));
    for (auto& v : pred.ids)
      v = static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1));
    std::optional<int> ignore;
    if (with_ignore) ignore = 255;

    ConfusionMatrix cm(classes);
    accumulate(cm, gt, pred, ignore);
    if (cm.total() == 0) continue;
    const auto brute = brute_force(gt, pred, classes, ignore);
    const auto iou = iou_per_class(cm);
    for (int c = 0; c < classes; ++c) {
      if (std::isnan(brute.iou[c]))
        REQUIRE(std::isnan(iou[c]));
      else
        REQUIRE(iou[c] == brute.iou[c]);
    }
    REQUIRE(mean_iou(cm) == brute.miou);
    REQUIRE(pixel_accuracy(cm) == brute.pixel_acc);
  }
}

TEST_CASE("accumulation is order-independent and merge matches one pass") {
  Rng rng(7);
  const int classes = 4;
  std::vector<LabelMap> gts, preds;
  for (int i = 0; i < 5; ++i) {
    LabelMap g(6, 6), p(6, 6);
    for (auto& v : g.ids)
      v = static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1));
    for (auto& v : p.ids)
      v = static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1));
    gts.push_back(g);
    preds.push_back(p);
  }
  ConfusionMatrix one_pass(classes);
  for (int i = 0; i < 5; ++i) accumulate(one_pass, gts[i], preds[i]);
  ConfusionMatrix merged(classes);
  for (int i = 4; i >= 0; --i) {  // reverse order, per-image matrices
    ConfusionMatrix per(classes);
    accumulate(per, gts[i], preds[i]);
    merged.merge(per);
  }
  REQUIRE(merged.counts == one_pass.counts);
}

TEST_CASE("iou values stay in [0, 1] and pixel accuracy equals trace/total") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    LabelMap gt(5, 5), pred(5, 5);
    for (auto& v : gt.ids) v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
    for (auto& v : pred.ids)
      v = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
    ConfusionMatrix cm(3);
    accumulate(cm, gt, pred);
    std::int64_t trace = 0;
    for (int c = 0; c < 3; ++c) trace += cm.at(c, c);
    REQUIRE(pixel_accuracy(cm) == double(trace) / double(cm.total()));
    for (double v : iou_per_class(cm))
      if (!std::isnan(v)) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
      }
  }
}

TEST_CASE("csv and json report forms carry the same numbers") {
  LabelMap gt(2, 2), pred(2, 2);
  gt.ids = {0, 0, 1, 1};
  pred.ids = {0, 1, 1, 1};
  ConfusionMatrix cm(2, {"background", "organ"});
  accumulate(cm, gt, pred);
  const auto rep = report(cm);
  const auto csv = format_report_csv(rep);
  REQUIRE(csv.find("class_id,class_name,iou_percent") == 0);
  REQUIRE(csv.find("0,background,50.00") != std::string::npos);
  REQUIRE(csv.find("1,organ,66.67") != std::string::npos);
  REQUIRE(csv.find(",mIoU,58.33") != std::string::npos);
  const auto j = report_to_json(rep);
  REQUIRE(j["pixel_accuracy"].get<double>() == 0.75);
  REQUIRE(j["classes"].size() == 2);
  REQUIRE(j["classes"][1]["iou"].get<double>() ==
          Catch::Approx(2.0 / 3.0).epsilon(1e-15));
}
