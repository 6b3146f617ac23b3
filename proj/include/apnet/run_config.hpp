#pragma once
// Resolved run configuration for the command-line tool: model + training
// hyperparameters, experiment preset, and augmentation settings, parsed from
// one JSON config file with flag overrides on top. The fully resolved record
// is echoed into the run directory before any work starts.

#include <string>

#include <json.hpp>

#include "apnet/checkpoint.hpp"
#include "apnet/mls.hpp"
#include "apnet/trainer.hpp"

namespace apnet {

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"base_lr", c.base_lr},
                     {"power", c.power},
                     {"max_iter", c.max_iter},
                     {"momentum", c.momentum},
                     {"weight_decay", c.weight_decay},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"val_interval", c.val_interval}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.base_lr = j.value("base_lr", d.base_lr);
  c.power = j.value("power", d.power);
  c.max_iter = j.value("max_iter", d.max_iter);
  c.momentum = j.value("momentum", d.momentum);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.val_interval = j.value("val_interval", d.val_interval);
}

inline std::string augment_kind_name(AugmentKind k) {
  switch (k) {
    case AugmentKind::None: return "none";
    case AugmentKind::Deform: return "mls";
    case AugmentKind::Common: return "common";
  }
  throw ArgumentError("unknown augment kind");
}

inline AugmentKind augment_kind_by_name(const std::string& name) {
  if (name == "none") return AugmentKind::None;
  if (name == "mls") return AugmentKind::Deform;
  if (name == "common") return AugmentKind::Common;
  throw ConfigError("unknown augment mode '" + name +
                    "' (expected none|mls|common)");
}

struct RunConfig {
  std::string preset = "apnet3+DA";
  ApnetConfig model;
  TrainConfig train;
  AugmentKind augment = AugmentKind::Deform;
  DeformSpec deform;
  int iterations = 0;  // 0 = train.max_iter
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"preset", c.preset},
                     {"model", c.model},
                     {"train", c.train},
                     {"augment",
                      {{"mode", augment_kind_name(c.augment)},
                       {"grid", c.deform.grid},
                       {"max_displacement", c.deform.max_displacement},
                       {"alpha", c.deform.alpha}}},
                     {"iterations", c.iterations}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  if (j.contains("preset")) {
    c.preset = j.at("preset").get<std::string>();
    const auto p = preset_by_name(c.preset);
    apply_preset(c.model, p);
    c.augment = p.augment;
  }
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    if (a.contains("mode"))
      c.augment = augment_kind_by_name(a.at("mode").get<std::string>());
    c.deform.grid = a.value("grid", c.deform.grid);
    c.deform.max_displacement =
        a.value("max_displacement", c.deform.max_displacement);
    c.deform.alpha = a.value("alpha", c.deform.alpha);
  }
  c.iterations = j.value("iterations", c.iterations);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad config JSON in " + path + ": " + e.what());
  }
  RunConfig c;
  try {
    j.get_to(c);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad config value in " + path + ": " + e.what());
  }
  return c;
}

}  // namespace apnet
