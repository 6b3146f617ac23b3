#pragma once
// Segmentation evaluation from an accumulated confusion matrix: per-class
// IoU, mean IoU over present classes, and overall pixel accuracy, plus the
// per-class report table the eval tool emits.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "apnet/tensor.hpp"

namespace apnet {

// counts[gt][pred] = number of pixels of ground-truth class gt predicted as
// pred. Classes with no ground-truth or predicted pixels are "absent" and
// excluded from the mean IoU.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;
  std::vector<std::string> class_names;

  explicit ConfusionMatrix(int c, std::vector<std::string> names = {})
      : num_classes(c),
        counts(static_cast<std::size_t>(c) * c, 0),
        class_names(std::move(names)) {
    if (c < 1) throw ArgumentError("ConfusionMatrix: need at least one class");
    if (!class_names.empty() && static_cast<int>(class_names.size()) != c)
      throw ArgumentError("ConfusionMatrix: class name count mismatch");
  }

  std::int64_t& at(int gt, int pred) {
    return counts[static_cast<std::size_t>(gt) * num_classes + pred];
  }
  std::int64_t at(int gt, int pred) const {
    return counts[static_cast<std::size_t>(gt) * num_classes + pred];
  }

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto v : counts) t += v;
    return t;
  }

  void merge(const ConfusionMatrix& other) {
    if (other.num_classes != num_classes)
      throw ShapeError("ConfusionMatrix::merge: class count mismatch");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  }
};

inline void accumulate(ConfusionMatrix& cm, const LabelMap& gt,
                       const LabelMap& pred,
                       std::optional<int> ignore_label = {}) {
  if (gt.h != pred.h || gt.w != pred.w)
    throw ShapeError("accumulate: gt " + std::to_string(gt.h) + "x" +
                     std::to_string(gt.w) + " vs pred " +
                     std::to_string(pred.h) + "x" + std::to_string(pred.w));
  for (int y = 0; y < gt.h; ++y) {
    for (int x = 0; x < gt.w; ++x) {
      const int g = gt.at(y, x);
      if (ignore_label && g == *ignore_label) continue;
      const int p = pred.at(y, x);
      if (g >= cm.num_classes)
        throw DataError("accumulate: gt class " + std::to_string(g) +
                        " out of range at pixel (" + std::to_string(y) + "," +
                        std::to_string(x) + ")");
      if (p >= cm.num_classes || (ignore_label && p == *ignore_label))
        throw DataError("accumulate: predicted class " + std::to_string(p) +
                        " out of range at pixel (" + std::to_string(y) + "," +
                        std::to_string(x) + ")");
      ++cm.at(g, p);
    }
  }
}

// IoU_i = TP_i / (TP_i + FP_i + FN_i); NaN marks a class absent from both
// ground truth and prediction.
inline std::vector<double> iou_per_class(const ConfusionMatrix& cm) {
  std::vector<double> iou(cm.num_classes);
  for (int i = 0; i < cm.num_classes; ++i) {
    const std::int64_t tp = cm.at(i, i);
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < cm.num_classes; ++j) {
      row += cm.at(i, j);
      col += cm.at(j, i);
    }
    const std::int64_t denom = row + col - tp;  // TP + FP + FN
    iou[i] = denom > 0 ? static_cast<double>(tp) / static_cast<double>(denom)
                       : std::numeric_limits<double>::quiet_NaN();
  }
  return iou;
}

inline double mean_iou(const ConfusionMatrix& cm) {
  const auto iou = iou_per_class(cm);
  double sum = 0.0;
  int present = 0;
  for (double v : iou) {
    if (!std::isnan(v)) {
      sum += v;
      ++present;
    }
  }
  if (!present) throw DataError("mean_iou: all classes absent");
  return sum / present;
}

inline double pixel_accuracy(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (!total) throw DataError("pixel_accuracy: no evaluated pixels");
  std::int64_t trace = 0;
  for (int i = 0; i < cm.num_classes; ++i) trace += cm.at(i, i);
  return static_cast<double>(trace) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Report table: one row per class with IoU(%), then PixelAcc and mIoU summary
// rows. Percentages carry two decimals in the text forms.
// ---------------------------------------------------------------------------

struct MetricsReport {
  struct Row {
    int class_id;
    std::string name;
    double iou;  // NaN = absent
  };
  std::vector<Row> rows;
  double mean_iou = 0.0;
  double pixel_accuracy = 0.0;
};

inline MetricsReport report(const ConfusionMatrix& cm) {
  MetricsReport rep;
  const auto iou = iou_per_class(cm);
  for (int i = 0; i < cm.num_classes; ++i) {
    const std::string name = cm.class_names.empty() ? std::to_string(i)
                                                    : cm.class_names[i];
    rep.rows.push_back({i, name, iou[i]});
  }
  rep.mean_iou = mean_iou(cm);
  rep.pixel_accuracy = pixel_accuracy(cm);
  return rep;
}

namespace detail {
inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
  return buf;
}
}  // namespace detail

inline std::string format_report_text(const MetricsReport& rep) {
  std::string out;
  std::size_t name_w = 5;
  for (const auto& r : rep.rows) name_w = std::max(name_w, r.name.size());
  out += "No.  ";
  out += "Class name";
  out += std::string(name_w > 10 ? name_w - 10 : 0, ' ');
  out += "  IoU(%)\n";
  for (const auto& r : rep.rows) {
    char head[16];
    std::snprintf(head, sizeof(head), "%-4d ", r.class_id);
    out += head;
    out += r.name + std::string(name_w - r.name.size(), ' ');
    out += "  " + (std::isnan(r.iou) ? std::string("absent")
                                     : detail::pct(r.iou));
    out += "\n";
  }
  out += "PixelAcc " + detail::pct(rep.pixel_accuracy) + "\n";
  out += "mIoU     " + detail::pct(rep.mean_iou) + "\n";
  return out;
}

// Delimited form: class_id,class_name,iou_percent rows, then summary rows
// with empty id. Column order is part of the tool contract.
inline std::string format_report_csv(const MetricsReport& rep) {
  std::string out = "class_id,class_name,iou_percent\n";
  for (const auto& r : rep.rows) {
    out += std::to_string(r.class_id) + "," + r.name + ",";
    out += std::isnan(r.iou) ? std::string("absent") : detail::pct(r.iou);
    out += "\n";
  }
  out += ",PixelAcc," + detail::pct(rep.pixel_accuracy) + "\n";
  out += ",mIoU," + detail::pct(rep.mean_iou) + "\n";
  return out;
}

inline nlohmann::json report_to_json(const MetricsReport& rep) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    nlohmann::json c{{"class_id", r.class_id}, {"name", r.name}};
    if (std::isnan(r.iou))
      c["iou"] = nullptr;
    else
      c["iou"] = r.iou;
    classes.push_back(c);
  }
  return nlohmann::json{{"classes", classes},
                        {"mean_iou", rep.mean_iou},
                        {"pixel_accuracy", rep.pixel_accuracy}};
}

}  // namespace apnet
