#pragma once
// Training loop: SGD with momentum and L2-in-gradient weight decay, poly
// learning-rate schedule, deep-supervision loss, optional online
// augmentation, periodic validation with best-checkpoint tracking. Fully
// seed-deterministic (single-threaded, hand-rolled RNG transforms).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "apnet/attention.hpp"
#include "apnet/checkpoint.hpp"
#include "apnet/dataset.hpp"
#include "apnet/metrics.hpp"
#include "apnet/mls.hpp"
#include "apnet/model.hpp"

namespace apnet {

struct TrainConfig {
  double base_lr = 2.5e-5;
  double power = 0.9;
  int max_iter = 110000;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 2;
  std::uint64_t seed = 1;
  int val_interval = 0;  // 0 = skip validation during training
};

inline void validate_train_config(const TrainConfig& c) {
  // base_lr 0 is allowed: a zero-rate run is the documented no-op baseline
  if (c.base_lr < 0) throw ConfigError("train: base_lr must be >= 0");
  if (c.power <= 0) throw ConfigError("train: power must be > 0");
  if (c.max_iter < 1) throw ConfigError("train: max_iter must be >= 1");
  if (c.momentum < 0 || c.momentum >= 1)
    throw ConfigError("train: momentum must be in [0, 1)");
  if (c.weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  if (c.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (c.val_interval < 0) throw ConfigError("train: val_interval must be >= 0");
}

// lr(iter) = base_lr * (1 - iter/max_iter)^power
inline double poly_lr(int iter, const TrainConfig& cfg) {
  if (iter < 0 || iter > cfg.max_iter)
    throw ArgumentError("poly_lr: iter " + std::to_string(iter) +
                        " outside [0, " + std::to_string(cfg.max_iter) + "]");
  return cfg.base_lr *
         std::pow(1.0 - static_cast<double>(iter) / cfg.max_iter, cfg.power);
}

// ---------------------------------------------------------------------------
// SGD with momentum; weight decay is added to the gradient before the
// momentum update (classic convention). Biases and attention logits carry
// weight_decay = false in their ParamRef.
// ---------------------------------------------------------------------------

template <typename T>
struct SgdState {
  std::vector<std::vector<T>> velocity;
};

template <typename T>
void sgd_step(std::vector<ParamRef<T>>& params, SgdState<T>& state, double lr,
              const TrainConfig& cfg) {
  if (state.velocity.empty()) {
    state.velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      state.velocity[i].assign(params[i].tensor->numel(), T(0));
  }
  if (state.velocity.size() != params.size())
    throw ShapeError("sgd_step: velocity/param count mismatch");
  const T mom = static_cast<T>(cfg.momentum);
  const T wd = static_cast<T>(cfg.weight_decay);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = *params[i].tensor;
    auto& v = state.velocity[i];
    if (v.size() != t.numel())
      throw ShapeError("sgd_step: velocity shape mismatch for " +
                       params[i].name);
    const T decay = params[i].weight_decay ? wd : T(0);
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = mom * v[j] + t.grad[j] + decay * t.data[j];
      t.data[j] -= rate * v[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Experiment presets (architecture arm + augmentation arm)
// ---------------------------------------------------------------------------

enum class AugmentKind { None, Deform, Common };

struct ExperimentPreset {
  std::string name;
  std::vector<double> scales;
  bool use_spp = true;
  AugmentKind augment = AugmentKind::Deform;
};

inline std::vector<ExperimentPreset> all_presets() {
  return {
      {"apnet3+DA", {1.0, 0.75, 0.5}, true, AugmentKind::Deform},
      {"apnet2+DA", {1.0, 0.75}, true, AugmentKind::Deform},
      {"pyramid-only+DA", {1.0}, true, AugmentKind::Deform},
      {"pyramid-only+CDA", {1.0}, true, AugmentKind::Common},
      {"single-scale-no-spp", {1.0}, false, AugmentKind::Deform},
  };
}

inline ExperimentPreset preset_by_name(const std::string& name) {
  for (auto& p : all_presets())
    if (p.name == name) return p;
  std::string known;
  for (auto& p : all_presets()) known += " " + p.name;
  throw ConfigError("unknown preset '" + name + "'; known:" + known);
}

inline void apply_preset(ApnetConfig& cfg, const ExperimentPreset& p) {
  cfg.scales = p.scales;
  cfg.use_spp = p.use_spp;
}

// ---------------------------------------------------------------------------
// Evaluation: forward + argmax over a dataset, accumulated confusion matrix.
// ---------------------------------------------------------------------------

inline ConfusionMatrix evaluate(const ApnetParams<float>& params,
                                const ApnetConfig& cfg,
                                const LoadedDataset& data,
                                std::optional<int> ignore_label = 255) {
  ConfusionMatrix cm(data.num_classes, data.class_names);
  for (const auto& sample : data.samples) {
    auto image = std::make_shared<Tensor4<float>>(sample.image);
    auto fwd = apnet_forward<float>(nullptr, image, params, cfg);
    const auto pred = predict(fwd.fused, cfg);
    accumulate(cm, sample.labels, pred[0], ignore_label);
  }
  return cm;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct HistoryRow {
  int iter = 0;
  double lr = 0;
  double loss = 0;
  double val_miou = -1;  // < 0 when no validation ran this iteration
};

struct IterStats {
  int iter = 0;
  double lr = 0;
  double loss = 0;
  std::vector<float> lambdas;
};

struct TrainOptions {
  ApnetConfig model;
  TrainConfig train;
  AugmentKind augment = AugmentKind::None;
  DeformSpec deform;  // grid/displacement for AugmentKind::Deform
  std::optional<int> ignore_label = 255;
  int iterations = 0;  // 0 = train.max_iter
  std::string out_dir;  // empty = no files written
  std::function<void(const IterStats&)> on_iter;
};

struct TrainResult {
  ApnetParams<float> params;       // final
  ApnetParams<float> best_params;  // best validation mIoU (== final if no val)
  std::vector<HistoryRow> history;
  double best_val_miou = -1;
  int best_iter = -1;
};

inline std::string format_history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "iter,lr,loss,val_miou\n";
  char buf[128];
  for (const auto& r : rows) {
    if (r.val_miou >= 0)
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", r.iter, r.lr,
                    r.loss, r.val_miou);
    else
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,\n", r.iter, r.lr, r.loss);
    out += buf;
  }
  return out;
}

inline TrainResult train(const TrainOptions& opt, const LoadedDataset& data,
                         const LoadedDataset* val_data = nullptr) {
  validate_model_config(opt.model);
  validate_train_config(opt.train);
  if (data.samples.empty()) throw DataError("train: empty training set");
  if (data.side != opt.model.input_size)
    throw ConfigError("train: dataset side " + std::to_string(data.side) +
                      " != model input_size " +
                      std::to_string(opt.model.input_size));
  const int iters = opt.iterations > 0 ? opt.iterations : opt.train.max_iter;
  if (iters > opt.train.max_iter)
    throw ConfigError("train: iterations exceed max_iter");

  TrainResult result;
  result.params = init_params<float>(opt.model, opt.train.seed);
  auto refs = result.params.refs();
  SgdState<float> state;

  Rng shuffle_rng(Rng::derive(opt.train.seed, 0x5u));
  std::vector<int> order;
  std::size_t cursor = 0;
  std::uint64_t sample_counter = 0;

  const int B = opt.train.batch_size;
  const int side = opt.model.input_size;
  const int chans = opt.model.in_channels;

  for (int iter = 0; iter < iters; ++iter) {
    auto batch = make_tensor<float>(B, chans, side, side);
    std::vector<LabelMap> batch_labels;
    batch_labels.reserve(B);

    for (int b = 0; b < B; ++b) {
      if (cursor >= order.size()) {
        order.resize(data.samples.size());
        for (std::size_t i = 0; i < order.size(); ++i)
          order[i] = static_cast<int>(i);
        shuffle_rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      const auto& sample = data.samples[order[cursor++]];
      const std::uint64_t aug_seed =
          Rng::derive(opt.train.seed, 0xA000000u + sample_counter++);

      Tensor4<float> img = sample.image;
      LabelMap lab = sample.labels;
      if (opt.augment == AugmentKind::Deform) {
        DeformSpec spec = opt.deform;
        spec.seed = aug_seed;
        auto warped = warp_pair(img, lab, spec);
        img = std::move(warped.first);
        lab = std::move(warped.second);
      } else if (opt.augment == AugmentKind::Common) {
        auto augd = common_augment(img, lab, aug_seed);
        img = std::move(augd.first);
        lab = std::move(augd.second);
      }
      std::copy(img.data.begin(), img.data.end(),
                batch->data.begin() + batch->index(b, 0, 0, 0));
      batch_labels.push_back(std::move(lab));
    }

    Tape<float> tape;
    auto fwd = apnet_forward(&tape, batch, result.params, opt.model);
    auto loss = deep_supervision_loss(&tape, fwd.outputs, fwd.fused,
                                      batch_labels, opt.ignore_label);
    const double loss_v = loss->data[0];
    if (!std::isfinite(loss_v)) {
      std::string tail;
      const std::size_t n = result.history.size();
      for (std::size_t i = n > 10 ? n - 10 : 0; i < n; ++i)
        tail += " " + std::to_string(result.history[i].loss);
      throw NumericError("train: non-finite loss at iter " +
                         std::to_string(iter) + " (lr=" +
                         std::to_string(poly_lr(iter, opt.train)) +
                         "); recent losses:" + tail);
    }

    for (auto& r : refs) r.tensor->zero_grad();
    backward_scalar(tape, loss);
    const double lr = poly_lr(iter, opt.train);
    sgd_step(refs, state, lr, opt.train);

    HistoryRow row{iter, lr, loss_v, -1};
    if (val_data && opt.train.val_interval > 0 &&
        (iter + 1) % opt.train.val_interval == 0) {
      const auto cm = evaluate(result.params, opt.model, *val_data,
                               opt.ignore_label);
      row.val_miou = mean_iou(cm);
      if (row.val_miou > result.best_val_miou) {
        result.best_val_miou = row.val_miou;
        result.best_iter = iter;
        result.best_params = clone_params(result.params);
      }
    }
    result.history.push_back(row);

    if (opt.on_iter) {
      AttentionWeights<float> w{result.params.attention_logits};
      opt.on_iter(IterStats{iter, lr, loss_v, w.lambdas()});
    }
  }

  if (result.best_iter < 0) result.best_params = clone_params(result.params);

  if (!opt.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(opt.out_dir);
    std::ofstream hist(fs::path(opt.out_dir) / "history.csv");
    if (!hist) throw IoError("train: cannot write history.csv");
    hist << format_history_csv(result.history);
    hist.close();
    save_checkpoint((fs::path(opt.out_dir) / "checkpoint_final.ckpt").string(),
                    opt.model, result.params);
    save_checkpoint((fs::path(opt.out_dir) / "checkpoint_best.ckpt").string(),
                    opt.model, result.best_params);
  }
  return result;
}

}  // namespace apnet
