// Command-line front end: synth, augment, train, eval, infer, gradcheck.
// Exit codes: 0 ok, 2 usage, 3 config, 4 data/io, 5 shape/argument,
// 6 numeric (including diverged training), 7 gradient check failed,
// 1 anything else.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "apnet/apnet.hpp"
#include "apnet/run_config.hpp"

namespace fs = std::filesystem;
using namespace apnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitData = 4;
constexpr int kExitShape = 5;
constexpr int kExitNumeric = 6;
constexpr int kExitGradcheck = 7;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << text;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SynthSpec spec;
  int train_series = 2, val_series = 1, test_series = 1;
  int slices = 4;
};

int run_synth(const SynthArgs& a) {
  const int total = a.train_series + a.val_series + a.test_series;
  auto manifest = generate(a.spec, total, a.slices, a.out);
  save_manifest((fs::path(a.out) / "manifest_all.txt").string(), manifest);
  auto parts =
      split_by_series(manifest, {a.train_series, a.val_series, a.test_series});
  const char* names[] = {"manifest_train.txt", "manifest_val.txt",
                         "manifest_test.txt"};
  for (int i = 0; i < 3; ++i)
    save_manifest((fs::path(a.out) / names[i]).string(), parts[i]);
  std::printf("synth: %d series x %d slices -> %s (%d/%d/%d train/val/test)\n",
              total, a.slices, a.out.c_str(), a.train_series, a.val_series,
              a.test_series);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// augment
// ---------------------------------------------------------------------------

struct AugmentArgs {
  std::string manifest;
  std::string out;
  int factor = 4;
  std::uint64_t seed = 1;
  std::string mode = "mls";
  DeformSpec deform;
};

int run_augment(const AugmentArgs& a) {
  if (a.factor < 1) throw ConfigError("augment: factor must be >= 1");
  const AugmentKind kind = augment_kind_by_name(a.mode);
  if (kind == AugmentKind::None)
    throw ConfigError("augment: mode must be mls or common");
  auto src = load_manifest(a.manifest);

  fs::create_directories(fs::path(a.out) / "images");
  fs::create_directories(fs::path(a.out) / "labels");
  DatasetManifest dst = src;
  dst.entries.clear();
  dst.root = a.out;

  std::uint64_t stream = 0;
  for (const auto& e : src.entries) {
    const ImageU8 img = load_image(resolve_path(src, e.image_path));
    const LabelMap lab = load_label(resolve_path(src, e.label_path));
    auto img_f = image_to_tensor<float>(img);
    for (int copy = 0; copy < a.factor; ++copy, ++stream) {
      Tensor4<float> out_img = img_f;
      LabelMap out_lab = lab;
      if (copy > 0) {  // copy 0 passes the original through
        const std::uint64_t s = Rng::derive(a.seed, stream);
        if (kind == AugmentKind::Deform) {
          DeformSpec spec = a.deform;
          spec.seed = s;
          auto warped = warp_pair(out_img, out_lab, spec);
          out_img = std::move(warped.first);
          out_lab = std::move(warped.second);
        } else {
          auto warped = common_augment(out_img, out_lab, s);
          out_img = std::move(warped.first);
          out_lab = std::move(warped.second);
        }
      }
      char name[96];
      std::snprintf(name, sizeof(name), "s%03d_z%02d_a%02d", e.series_id,
                    e.slice_index, copy);
      const std::string img_rel = std::string("images/") + name + ".pgm";
      const std::string lab_rel = std::string("labels/") + name + ".png";
      save_pgm((fs::path(a.out) / img_rel).string(), tensor_to_image(out_img));
      save_label_png((fs::path(a.out) / lab_rel).string(), out_lab);
      dst.entries.push_back(
          {img_rel, lab_rel, e.series_id, e.slice_index * a.factor + copy});
    }
  }
  save_manifest((fs::path(a.out) / "manifest.txt").string(), dst);
  std::printf("augment: %zu -> %zu samples (%s) in %s\n", src.entries.size(),
              dst.entries.size(), a.mode.c_str(), a.out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string val_manifest;
  std::string out;
  std::string config_file;
  std::string preset;
  std::string augment_mode;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int iters = 0;
  double lr = -1;
  int batch = 0;
  int val_interval = -1;
};

int run_train(const TrainArgs& a) {
  RunConfig rc;
  {  // defaults tuned for desk-scale runs; file and flags override
    rc.train.base_lr = 0.1;
    rc.train.max_iter = 1000;
    rc.train.seed = 1;
    const auto p = preset_by_name(rc.preset);
    apply_preset(rc.model, p);
    rc.augment = p.augment;
  }
  if (!a.config_file.empty()) {
    RunConfig file_rc = load_run_config(a.config_file);
    rc = file_rc;
  }
  if (!a.preset.empty()) {
    rc.preset = a.preset;
    const auto p = preset_by_name(a.preset);
    apply_preset(rc.model, p);
    rc.augment = p.augment;
  }
  if (!a.augment_mode.empty()) rc.augment = augment_kind_by_name(a.augment_mode);
  if (a.seed_set) rc.train.seed = a.seed;
  if (a.iters > 0) {
    rc.iterations = a.iters;
    rc.train.max_iter = a.iters;
  }
  if (a.lr >= 0) rc.train.base_lr = a.lr;
  if (a.batch > 0) rc.train.batch_size = a.batch;
  if (a.val_interval >= 0) rc.train.val_interval = a.val_interval;

  auto manifest = load_manifest(a.manifest);
  rc.model.num_classes = manifest.num_classes;
  rc.model.input_size = manifest.image_side;
  validate_model_config(rc.model);
  validate_train_config(rc.train);

  fs::create_directories(a.out);
  write_text((fs::path(a.out) / "config.json").string(),
             nlohmann::json(rc).dump(2) + "\n");

  auto data = load_dataset(manifest);
  LoadedDataset val;
  const bool has_val = !a.val_manifest.empty();
  if (has_val) val = load_dataset(load_manifest(a.val_manifest));

  TrainOptions opt;
  opt.model = rc.model;
  opt.train = rc.train;
  opt.augment = rc.augment;
  opt.deform = rc.deform;
  opt.iterations = rc.iterations;
  opt.out_dir = a.out;

  const auto t0 = std::chrono::steady_clock::now();
  auto result = train(opt, data, has_val ? &val : nullptr);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  AttentionWeights<float> w{result.params.attention_logits};
  std::string lam = "attention lambdas:";
  for (float v : w.lambdas()) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), " %.4f", v);
    lam += buf;
  }
  std::printf("train: preset %s, %zu iters, final loss %.4f, %.1fs\n%s\n",
              rc.preset.c_str(), result.history.size(),
              result.history.back().loss, secs, lam.c_str());
  if (result.best_val_miou >= 0)
    std::printf("best val mIoU %.4f at iter %d\n", result.best_val_miou,
                result.best_iter);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  auto ck = load_checkpoint(a.checkpoint);
  auto manifest = load_manifest(a.manifest);
  if (manifest.num_classes != ck.config.num_classes)
    throw DataError("eval: manifest classes " +
                    std::to_string(manifest.num_classes) +
                    " != checkpoint classes " +
                    std::to_string(ck.config.num_classes));
  auto data = load_dataset(manifest);
  if (data.side != ck.config.input_size)
    throw DataError("eval: dataset side " + std::to_string(data.side) +
                    " != checkpoint input_size " +
                    std::to_string(ck.config.input_size));
  auto cm = evaluate(ck.params, ck.config, data);
  const auto rep = report(cm);
  const auto text = format_report_text(rep);
  std::fputs(text.c_str(), stdout);

  AttentionWeights<float> w{ck.params.attention_logits};
  std::string lam = "attention lambdas:";
  for (float v : w.lambdas()) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), " %.4f", v);
    lam += buf;
  }
  std::printf("%s\n", lam.c_str());

  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text((fs::path(a.out) / "report.txt").string(), text);
    write_text((fs::path(a.out) / "report.csv").string(),
               format_report_csv(rep));
    write_text((fs::path(a.out) / "report.json").string(),
               report_to_json(rep).dump(2) + "\n");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string image;
  std::string out;
  std::string overlay;
};

int run_infer(const InferArgs& a) {
  auto ck = load_checkpoint(a.checkpoint);
  const ImageU8 img = load_image(a.image);
  if (img.h != ck.config.input_size || img.w != ck.config.input_size)
    throw DataError("infer: image " + std::to_string(img.h) + "x" +
                    std::to_string(img.w) + " != checkpoint input_size " +
                    std::to_string(ck.config.input_size));
  auto tensor = std::make_shared<Tensor4<float>>(image_to_tensor<float>(img));
  auto fwd = apnet_forward<float>(nullptr, tensor, ck.params, ck.config);
  auto pred = predict(fwd.fused, ck.config);
  save_label_png(a.out, pred[0]);
  if (!a.overlay.empty()) save_png(a.overlay, overlay_labels(img, pred[0]));
  std::printf("infer: wrote %s%s\n", a.out.c_str(),
              a.overlay.empty() ? "" : (" and " + a.overlay).c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int run_gradcheck(int seeds, double tolerance) {
  const auto results = run_gradcheck_suite(seeds, tolerance);
  std::fputs(format_gradcheck_table(results).c_str(), stdout);
  bool all_pass = true;
  for (const auto& r : results) all_pass = all_pass && r.pass;
  std::printf("gradcheck: %s (%zu checks, %d seeds each, tol %.1e)\n",
              all_pass ? "all passed" : "FAILED", results.size(), seeds,
              tolerance);
  return all_pass ? kExitOk : kExitGradcheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attention-pyramid semantic segmentation workbench"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--out", synth_args.out, "output directory")->required();
  synth->add_option("--side", synth_args.spec.side,
                    "image side (multiple of 8)");
  synth->add_option("--pairs", synth_args.spec.class_pairs,
                    "left/right twin class pairs");
  synth->add_option("--unpaired", synth_args.spec.unpaired_classes,
                    "unpaired organ classes");
  synth->add_option("--blobs-min", synth_args.spec.blobs_min,
                    "min blobs per unpaired class");
  synth->add_option("--blobs-max", synth_args.spec.blobs_max,
                    "max blobs per unpaired class");
  synth->add_option("--radius-min", synth_args.spec.radius_min,
                    "min blob radius (fraction of side)");
  synth->add_option("--radius-max", synth_args.spec.radius_max,
                    "max blob radius (fraction of side)");
  synth->add_option("--noise", synth_args.spec.noise_level,
                    "additive gaussian noise level");
  synth->add_option("--blur", synth_args.spec.blur_sigma,
                    "gaussian blur sigma in pixels");
  synth->add_option("--seed", synth_args.spec.seed, "master seed");
  synth->add_option("--train-series", synth_args.train_series,
                    "series in the train split");
  synth->add_option("--val-series", synth_args.val_series,
                    "series in the val split");
  synth->add_option("--test-series", synth_args.test_series,
                    "series in the test split");
  synth->add_option("--slices", synth_args.slices, "slices per series");

  AugmentArgs aug_args;
  auto* augment = app.add_subcommand("augment", "expand a dataset by warping");
  augment->add_option("--manifest", aug_args.manifest, "input manifest")
      ->required();
  augment->add_option("--out", aug_args.out, "output directory")->required();
  augment->add_option("--factor", aug_args.factor,
                      "copies per input (copy 0 is the original)");
  augment->add_option("--seed", aug_args.seed, "master seed");
  augment->add_option("--mode", aug_args.mode, "mls|common");
  augment->add_option("--grid", aug_args.deform.grid, "control lattice size");
  augment->add_option("--max-disp", aug_args.deform.max_displacement,
                      "max control displacement in pixels (<0: 5% of side)");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--manifest", train_args.manifest, "train manifest")
      ->required();
  train_cmd->add_option("--val-manifest", train_args.val_manifest,
                        "validation manifest");
  train_cmd->add_option("--out", train_args.out, "run directory")->required();
  train_cmd->add_option("--config", train_args.config_file,
                        "JSON config file");
  train_cmd->add_option("--preset", train_args.preset,
                        "apnet3+DA|apnet2+DA|pyramid-only+DA|pyramid-only+CDA|"
                        "single-scale-no-spp");
  train_cmd->add_option("--augment", train_args.augment_mode,
                        "override augmentation: none|mls|common");
  auto* seed_opt =
      train_cmd->add_option("--seed", train_args.seed, "training seed");
  train_cmd->add_option("--iters", train_args.iters, "iterations to run");
  train_cmd->add_option("--lr", train_args.lr, "base learning rate");
  train_cmd->add_option("--batch", train_args.batch, "batch size");
  train_cmd->add_option("--val-interval", train_args.val_interval,
                        "validate every K iterations (0 = never)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")
      ->required();
  eval_cmd->add_option("--manifest", eval_args.manifest, "test manifest")
      ->required();
  eval_cmd->add_option("--out", eval_args.out, "report output directory");

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "segment a single image");
  infer_cmd
      ->add_option("--checkpoint", infer_args.checkpoint, "checkpoint file")
      ->required();
  infer_cmd->add_option("--image", infer_args.image, "input image (PGM/PNG)")
      ->required();
  infer_cmd->add_option("--out", infer_args.out, "output label PNG")
      ->required();
  infer_cmd->add_option("--overlay", infer_args.overlay,
                        "optional color overlay PNG");

  int gc_seeds = 10;
  double gc_tol = 1e-4;
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck_cmd->add_option("--seeds", gc_seeds, "random seeds per op");
  gradcheck_cmd->add_option("--tolerance", gc_tol, "max relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (augment->parsed()) return run_augment(aug_args);
    if (train_cmd->parsed()) {
      train_args.seed_set = seed_opt->count() > 0;
      return run_train(train_args);
    }
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (infer_cmd->parsed()) return run_infer(infer_args);
    if (gradcheck_cmd->parsed()) return run_gradcheck(gc_seeds, gc_tol);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitData;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return kExitShape;
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "argument error: %s\n", e.what());
    return kExitShape;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitUsage;
}
