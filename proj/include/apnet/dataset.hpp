#pragma once
// Dataset manifest I/O, series-respecting splits, and the synthetic
// "pelvic-like" generator. Each synthetic series draws smooth star-shaped
// blobs, one per organ class. Twin classes share one intensity and one shape
// distribution but live in mirrored horizontal bands, so global position is
// the only signal that separates them. Blob shapes morph smoothly across the
// slices of a series.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "apnet/image_io.hpp"
#include "apnet/tensor.hpp"

namespace apnet {

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string image_path;  // relative to the manifest's directory
  std::string label_path;
  int series_id = 0;
  int slice_index = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int num_classes = 0;
  std::vector<std::string> class_names;
  int image_side = 0;
  std::string root;  // set by the loader; not serialized
};

inline std::string resolve_path(const DatasetManifest& m,
                                const std::string& rel) {
  std::filesystem::path p(rel);
  if (p.is_absolute() || m.root.empty()) return rel;
  return (std::filesystem::path(m.root) / p).string();
}

inline void save_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "apnet-manifest 1\n";
  os << "num_classes " << m.num_classes << "\n";
  os << "image_side " << m.image_side << "\n";
  os << "class_names";
  for (const auto& n : m.class_names) os << " " << n;
  os << "\n";
  for (const auto& e : m.entries)
    os << "entry " << e.image_path << " " << e.label_path << " " << e.series_id
       << " " << e.slice_index << "\n";
  if (!os) throw IoError("write failed for " + path);
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path);
  DatasetManifest m;
  m.root = std::filesystem::path(path).parent_path().string();
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    auto fail = [&](const std::string& what) {
      throw DataError("manifest " + path + ":" + std::to_string(line_no) +
                      ": " + what);
    };
    if (key == "apnet-manifest") {
      int version = 0;
      ss >> version;
      if (version != 1) fail("unsupported manifest version");
      header_seen = true;
    } else if (key == "num_classes") {
      if (!(ss >> m.num_classes)) fail("bad num_classes");
    } else if (key == "image_side") {
      if (!(ss >> m.image_side)) fail("bad image_side");
    } else if (key == "class_names") {
      std::string n;
      while (ss >> n) m.class_names.push_back(n);
    } else if (key == "entry") {
      ManifestEntry e;
      if (!(ss >> e.image_path >> e.label_path >> e.series_id >> e.slice_index))
        fail("bad entry line");
      m.entries.push_back(std::move(e));
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!header_seen) throw DataError("manifest " + path + ": missing header");
  if (m.num_classes < 1 || m.image_side < 1)
    throw DataError("manifest " + path + ": incomplete header");
  return m;
}

// Whole-series split: a series never lands in more than one part.
inline std::vector<DatasetManifest> split_by_series(
    const DatasetManifest& m, const std::vector<int>& series_counts) {
  std::vector<int> series_ids;
  for (const auto& e : m.entries)
    if (std::find(series_ids.begin(), series_ids.end(), e.series_id) ==
        series_ids.end())
      series_ids.push_back(e.series_id);

  int want = 0;
  for (int c : series_counts) {
    if (c < 0) throw ArgumentError("split_by_series: negative count");
    want += c;
  }
  if (want > static_cast<int>(series_ids.size()))
    throw ArgumentError("split_by_series: requested " + std::to_string(want) +
                        " series, dataset has " +
                        std::to_string(series_ids.size()));

  std::vector<DatasetManifest> parts;
  int next = 0;
  for (int c : series_counts) {
    DatasetManifest part = m;
    part.entries.clear();
    const std::vector<int> take(series_ids.begin() + next,
                                series_ids.begin() + next + c);
    next += c;
    for (const auto& e : m.entries)
      if (std::find(take.begin(), take.end(), e.series_id) != take.end())
        part.entries.push_back(e);
    parts.push_back(std::move(part));
  }

  // no series id may appear in two parts
  for (std::size_t a = 0; a < parts.size(); ++a)
    for (std::size_t b = a + 1; b < parts.size(); ++b)
      for (const auto& ea : parts[a].entries)
        for (const auto& eb : parts[b].entries)
          if (ea.series_id == eb.series_id)
            throw DataError("split_by_series: series " +
                            std::to_string(ea.series_id) + " in two splits");
  return parts;
}

// ---------------------------------------------------------------------------
// In-memory dataset
// ---------------------------------------------------------------------------

struct LoadedSample {
  Tensor4<float> image;  // (1, 1, side, side), values in [0, 1]
  LabelMap labels;
  int series_id = 0;
};

struct LoadedDataset {
  std::vector<LoadedSample> samples;
  int num_classes = 0;
  int side = 0;
  std::vector<std::string> class_names;
};

inline LoadedDataset load_dataset(const DatasetManifest& m) {
  LoadedDataset ds;
  ds.num_classes = m.num_classes;
  ds.side = m.image_side;
  ds.class_names = m.class_names;
  for (const auto& e : m.entries) {
    const ImageU8 img = load_image(resolve_path(m, e.image_path));
    LabelMap lab = load_label(resolve_path(m, e.label_path));
    if (img.h != m.image_side || img.w != m.image_side)
      throw DataError("image dims " + std::to_string(img.h) + "x" +
                      std::to_string(img.w) + " != manifest side " +
                      std::to_string(m.image_side) + ": " + e.image_path);
    if (lab.h != img.h || lab.w != img.w)
      throw DataError("image/label dims mismatch for " + e.image_path);
    for (std::uint8_t v : lab.ids)
      if (v >= m.num_classes && v != 255)
        throw DataError("label value " + std::to_string(v) +
                        " out of range in " + e.label_path);
    ds.samples.push_back(
        {image_to_tensor<float>(img), std::move(lab), e.series_id});
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

struct SynthSpec {
  int side = 64;            // divisible by 8
  int class_pairs = 2;      // left/right twin classes
  int unpaired_classes = 1;
  int blobs_min = 1, blobs_max = 1;  // blob instances per unpaired class
  double radius_min = 0.08, radius_max = 0.13;  // fraction of side
  // per-series anatomy scale factor range (organ sizes vary by subject)
  double series_scale_min = 1.0, series_scale_max = 1.0;
  // horizontal band (fraction of side) holding twin centers; keeping twins
  // off the borders forces left/right assignment through global position
  double twin_band_lo = 0.10, twin_band_hi = 0.44;
  double noise_level = 0.04;  // additive Gaussian, [0,1] intensity scale
  double blur_sigma = 0.8;    // Gaussian blur radius in pixels
  std::uint64_t seed = 1;
};

inline int synth_num_classes(const SynthSpec& s) {
  return 1 + 2 * s.class_pairs + s.unpaired_classes;
}

inline std::vector<std::string> synth_class_names(const SynthSpec& s) {
  std::vector<std::string> names{"background"};
  for (int k = 0; k < s.class_pairs; ++k) {
    names.push_back("pair" + std::to_string(k) + "-left");
    names.push_back("pair" + std::to_string(k) + "-right");
  }
  for (int k = 0; k < s.unpaired_classes; ++k)
    names.push_back("solo" + std::to_string(k));
  return names;
}

inline void validate_synth_spec(const SynthSpec& s) {
  if (s.side < 16 || s.side % 8 != 0)
    throw ConfigError("synth: side must be a multiple of 8, >= 16");
  if (s.class_pairs < 0 || s.unpaired_classes < 0 ||
      s.class_pairs + s.unpaired_classes < 1)
    throw ConfigError("synth: need at least one organ class");
  if (synth_num_classes(s) > 254)
    throw ConfigError("synth: class count exceeds 254");
  if (s.blobs_min < 1 || s.blobs_max < s.blobs_min)
    throw ConfigError("synth: bad blob count range");
  if (s.radius_min <= 0 || s.radius_max < s.radius_min || s.radius_max > 0.45)
    throw ConfigError("synth: bad radius range");
  if (s.twin_band_lo < 0 || s.twin_band_hi <= s.twin_band_lo ||
      s.twin_band_hi > 0.5)
    throw ConfigError("synth: twin band must satisfy 0 <= lo < hi <= 0.5");
  if (s.series_scale_min <= 0 || s.series_scale_max < s.series_scale_min)
    throw ConfigError("synth: bad series scale range");
  if (s.noise_level < 0 || s.blur_sigma < 0)
    throw ConfigError("synth: noise/blur must be non-negative");
}

namespace detail {

// Star-shaped blob: boundary radius r(theta) = r0 * (1 + a2 cos(2 theta + f2)
// + a3 cos(3 theta + f3)). All parameters interpolate linearly across slices.
struct BlobParams {
  double cx = 0, cy = 0, r0 = 0, a2 = 0, f2 = 0, a3 = 0, f3 = 0;
};

struct BlobTrack {
  BlobParams start, end;
  int class_id = 0;
};

inline BlobParams blob_at(const BlobTrack& b, double t) {
  auto lerp = [t](double a, double z) { return a + (z - a) * t; };
  BlobParams p;
  p.cx = lerp(b.start.cx, b.end.cx);
  p.cy = lerp(b.start.cy, b.end.cy);
  p.r0 = lerp(b.start.r0, b.end.r0);
  p.a2 = lerp(b.start.a2, b.end.a2);
  p.f2 = lerp(b.start.f2, b.end.f2);
  p.a3 = lerp(b.start.a3, b.end.a3);
  p.f3 = lerp(b.start.f3, b.end.f3);
  return p;
}

inline bool blob_contains(const BlobParams& p, double x, double y) {
  const double dx = x - p.cx, dy = y - p.cy;
  const double d = std::sqrt(dx * dx + dy * dy);
  if (d < 1e-12) return true;
  const double theta = std::atan2(dy, dx);
  const double r = p.r0 * (1.0 + p.a2 * std::cos(2 * theta + p.f2) +
                           p.a3 * std::cos(3 * theta + p.f3));
  return d <= r;
}

// Conservative bound on the blob's extent for placement rejection.
inline double blob_bound(const BlobParams& p) { return p.r0 * 1.32; }

inline bool tracks_clear(const BlobTrack& a, const BlobTrack& b) {
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const BlobParams pa = blob_at(a, t), pb = blob_at(b, t);
    const double dx = pa.cx - pb.cx, dy = pa.cy - pb.cy;
    if (std::sqrt(dx * dx + dy * dy) <
        blob_bound(pa) + blob_bound(pb) + 1.5)
      return false;
  }
  return true;
}

inline void gaussian_blur_inplace(std::vector<float>& img, int h, int w,
                                  double sigma) {
  if (sigma <= 0) return;
  const int rad = static_cast<int>(std::ceil(3 * sigma));
  std::vector<float> k(2 * rad + 1);
  float sum = 0;
  for (int i = -rad; i <= rad; ++i) {
    k[i + rad] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    sum += k[i + rad];
  }
  for (auto& v : k) v /= sum;

  std::vector<float> tmp(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int i = -rad; i <= rad; ++i) {
        const int xx = std::min(std::max(x + i, 0), w - 1);
        acc += k[i + rad] * img[y * w + xx];
      }
      tmp[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int i = -rad; i <= rad; ++i) {
        const int yy = std::min(std::max(y + i, 0), h - 1);
        acc += k[i + rad] * tmp[yy * w + x];
      }
      img[y * w + x] = acc;
    }
}

}  // namespace detail

struct SynthSlice {
  ImageU8 image;
  LabelMap labels;
};

// One series: blob parameters drawn once, shapes morphed across slices.
// Deterministic per (spec.seed, series_index); series are independent.
inline std::vector<SynthSlice> synth_series(const SynthSpec& spec,
                                            int series_index,
                                            int slices_per_series) {
  validate_synth_spec(spec);
  if (slices_per_series < 1)
    throw ArgumentError("synth_series: need at least one slice");

  const int side = spec.side;
  const double margin = 0.05 * side;
  const int total_slots = spec.class_pairs + spec.unpaired_classes;
  std::vector<SynthSlice> out;

  {
    const int s = series_index;
    Rng rng(Rng::derive(spec.seed, static_cast<std::uint64_t>(s)));

    // per-series anatomy scale and intensity table; twins share their
    // pair's intensity slot
    const double series_scale =
        rng.uniform(spec.series_scale_min, spec.series_scale_max);
    const double bg = 0.12 + rng.uniform(-0.02, 0.02);
    std::vector<double> slot(total_slots);
    for (int i = 0; i < total_slots; ++i)
      slot[i] = 0.35 + 0.55 * (i + 0.5) / total_slots + rng.uniform(-0.03, 0.03);

    // Blob tracks: one per twin class and blobs_min..blobs_max per unpaired
    // class. Twins draw positions and shapes independently from mirrored
    // bands of one distribution, so the image half is the only class signal.
    enum class XBand { Left, Right, Anywhere };
    std::vector<detail::BlobTrack> tracks;
    auto draw_endpoint = [&](XBand band) {
      detail::BlobParams p;
      p.r0 = rng.uniform(spec.radius_min, spec.radius_max) * side * series_scale;
      const double bound = detail::blob_bound(p);
      double x_lo = margin + bound, x_hi = side - margin - bound;
      if (band == XBand::Left) {
        x_lo = std::max(x_lo, spec.twin_band_lo * side);
        x_hi = std::min({x_hi, side * 0.5 - 0.03 * side - bound,
                         spec.twin_band_hi * side});
      } else if (band == XBand::Right) {
        x_lo = std::max({x_lo, side * 0.5 + 0.03 * side + bound,
                         (1.0 - spec.twin_band_hi) * side});
        x_hi = std::min(x_hi, (1.0 - spec.twin_band_lo) * side);
      }
      if (x_hi <= x_lo)
        throw DataError("generate: blob radius too large for image side");
      p.cx = rng.uniform(x_lo, x_hi);
      p.cy = rng.uniform(margin + bound, side - margin - bound);
      p.a2 = rng.uniform(-0.18, 0.18);
      p.f2 = rng.uniform(0, 6.283185307179586);
      p.a3 = rng.uniform(-0.12, 0.12);
      p.f3 = rng.uniform(0, 6.283185307179586);
      return p;
    };
    auto place = [&](int class_id, XBand band) {
      for (int attempt = 0;; ++attempt) {
        if (attempt >= 500)
          throw DataError("generate: cannot place blob for class " +
                          std::to_string(class_id) + " (spec overcrowded)");
        detail::BlobTrack t;
        t.start = draw_endpoint(band);
        t.end = draw_endpoint(band);
        // keep slice-to-slice drift bounded so the morph looks anatomical
        t.end.cx = t.start.cx + 0.35 * (t.end.cx - t.start.cx);
        t.end.cy = t.start.cy + 0.35 * (t.end.cy - t.start.cy);
        t.class_id = class_id;
        bool ok = true;
        for (const auto& other : tracks)
          if (!detail::tracks_clear(t, other)) ok = false;
        if (ok) {
          tracks.push_back(t);
          return;
        }
      }
    };

    for (int k = 0; k < spec.class_pairs; ++k) {
      place(1 + 2 * k, XBand::Left);
      place(2 + 2 * k, XBand::Right);
    }
    for (int k = 0; k < spec.unpaired_classes; ++k) {
      const int count = rng.uniform_int(spec.blobs_min, spec.blobs_max);
      for (int i = 0; i < count; ++i)
        place(1 + 2 * spec.class_pairs + k, XBand::Anywhere);
    }

    for (int z = 0; z < slices_per_series; ++z) {
      const double t =
          slices_per_series > 1 ? static_cast<double>(z) / (slices_per_series - 1)
                                : 0.0;
      LabelMap lab(side, side, 0);
      for (const auto& track : tracks) {
        const detail::BlobParams p = detail::blob_at(track, t);
        const int x0 = std::max(0, static_cast<int>(p.cx - detail::blob_bound(p)) - 1);
        const int x1 = std::min(side - 1,
                                static_cast<int>(p.cx + detail::blob_bound(p)) + 1);
        const int y0 = std::max(0, static_cast<int>(p.cy - detail::blob_bound(p)) - 1);
        const int y1 = std::min(side - 1,
                                static_cast<int>(p.cy + detail::blob_bound(p)) + 1);
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x)
            if (detail::blob_contains(p, x, y))
              lab.at(y, x) = static_cast<std::uint8_t>(track.class_id);
      }

      // intensity field -> blur -> noise -> quantize
      std::vector<float> img(static_cast<std::size_t>(side) * side);
      auto intensity_of = [&](int id) {
        if (id == 0) return bg;
        const int organ = id - 1;
        return organ < 2 * spec.class_pairs
                   ? slot[organ / 2]
                   : slot[spec.class_pairs + (organ - 2 * spec.class_pairs)];
      };
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
          img[y * side + x] = static_cast<float>(intensity_of(lab.at(y, x)));
      detail::gaussian_blur_inplace(img, side, side, spec.blur_sigma);
      if (spec.noise_level > 0)
        for (auto& v : img)
          v += static_cast<float>(rng.normal() * spec.noise_level);

      ImageU8 pixels(side, side, 1);
      for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = std::min(std::max(static_cast<double>(img[i]), 0.0), 1.0);
        pixels.pix[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
      out.push_back({std::move(pixels), std::move(lab)});
    }
  }
  return out;
}

// Generates n_series x slices_per_series image/label pairs under out_dir
// (images/ and labels/ subdirectories) and returns the manifest with paths
// relative to out_dir.
inline DatasetManifest generate(const SynthSpec& spec, int n_series,
                                int slices_per_series,
                                const std::string& out_dir) {
  validate_synth_spec(spec);
  if (n_series < 1) throw ArgumentError("generate: need at least one series");

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "labels");

  DatasetManifest m;
  m.num_classes = synth_num_classes(spec);
  m.class_names = synth_class_names(spec);
  m.image_side = spec.side;
  m.root = out_dir;

  for (int s = 0; s < n_series; ++s) {
    const auto slices = synth_series(spec, s, slices_per_series);
    for (int z = 0; z < slices_per_series; ++z) {
      char name[64];
      std::snprintf(name, sizeof(name), "s%03d_z%02d", s, z);
      const std::string img_rel = std::string("images/") + name + ".pgm";
      const std::string lab_rel = std::string("labels/") + name + ".png";
      save_pgm((fs::path(out_dir) / img_rel).string(), slices[z].image);
      save_label_png((fs::path(out_dir) / lab_rel).string(), slices[z].labels);
      m.entries.push_back({img_rel, lab_rel, s, z});
    }
  }
  return m;
}

// In-memory dataset straight from the generator, series ids
// [first_series, first_series + n_series).
inline LoadedDataset synth_dataset(const SynthSpec& spec, int first_series,
                                   int n_series, int slices_per_series) {
  LoadedDataset ds;
  ds.num_classes = synth_num_classes(spec);
  ds.class_names = synth_class_names(spec);
  ds.side = spec.side;
  for (int s = first_series; s < first_series + n_series; ++s)
    for (auto& slice : synth_series(spec, s, slices_per_series))
      ds.samples.push_back({image_to_tensor<float>(slice.image),
                            std::move(slice.labels), s});
  return ds;
}

}  // namespace apnet
