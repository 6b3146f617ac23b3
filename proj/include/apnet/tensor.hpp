#pragma once
// Rank-4 tensor (batch, channel, height, width) with paired gradient storage,
// plus the backward tape that every differentiable op in this project records
// onto. Templated on the scalar type: float for training, double for
// finite-difference gradient checking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace apnet {

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps each family to a distinct exit code.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions do not line up for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A plain argument (kernel size, stride, level list, ...) is invalid.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Input data violates its contract (label out of range, malformed file, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// A numeric procedure cannot continue (singular matrix, diverged loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

// File could not be read/written/decoded.
class IoError : public Error {
 public:
  using Error::Error;
};

// A configuration record fails validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Tensor4
// ---------------------------------------------------------------------------

template <typename T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;  // row-major (n, c, h, w)
  std::vector<T> grad;  // same length as data, zero until backward runs

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_) {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw ShapeError("Tensor4: negative dimension (" + shape_str() + ")");
    data.assign(numel(), fill);
    grad.assign(numel(), T(0));
  }

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }

  std::size_t index(int i, int j, int y, int x) const {
    return ((static_cast<std::size_t>(i) * c + j) * h + y) * w + x;
  }

  T& at(int i, int j, int y, int x) { return data[index(i, j, y, x)]; }
  const T& at(int i, int j, int y, int x) const {
    return data[index(i, j, y, x)];
  }
  T& gat(int i, int j, int y, int x) { return grad[index(i, j, y, x)]; }

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor4<T>>;

template <typename T>
TensorPtr<T> make_tensor(int n, int c, int h, int w, T fill = T(0)) {
  return std::make_shared<Tensor4<T>>(n, c, h, w, fill);
}

template <typename T>
bool all_finite(const Tensor4<T>& t) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Backward tape. Ops push one closure per forward step; backward() replays
// them in reverse. A single tape instance is always driven single-threaded.
// ---------------------------------------------------------------------------

template <typename T>
class Tape {
 public:
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  void backward() {
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

  void clear() { steps_.clear(); }
  std::size_t size() const { return steps_.size(); }

 private:
  std::vector<std::function<void()>> steps_;
};

// Seeds d(out)/d(out) = 1 on a scalar tensor and replays the tape.
template <typename T>
void backward_scalar(Tape<T>& tape, const TensorPtr<T>& loss) {
  if (!loss || loss->numel() != 1)
    throw ShapeError("backward_scalar: output is not a scalar tensor");
  loss->grad[0] = T(1);
  tape.backward();
}

// ---------------------------------------------------------------------------
// LabelMap: per-pixel integer class image, classes 0..C-1. Value 255 is the
// conventional ignore label in the file formats.
// ---------------------------------------------------------------------------

struct LabelMap {
  int h = 0, w = 0;
  std::vector<std::uint8_t> ids;

  LabelMap() = default;
  LabelMap(int h_, int w_, std::uint8_t fill = 0)
      : h(h_), w(w_), ids(static_cast<std::size_t>(h_) * w_, fill) {}

  std::uint8_t& at(int y, int x) {
    return ids[static_cast<std::size_t>(y) * w + x];
  }
  std::uint8_t at(int y, int x) const {
    return ids[static_cast<std::size_t>(y) * w + x];
  }
  bool operator==(const LabelMap& o) const {
    return h == o.h && w == o.w && ids == o.ids;
  }
};

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 has a standard-specified output
// sequence; the distribution transforms are hand-rolled so that draws are
// bit-identical across standard library implementations.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; draws two uniforms per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw ArgumentError("Rng::uniform_int: hi < lo");
    std::uint64_t span = static_cast<std::uint64_t>(hi) - lo + 1;
    return lo + static_cast<int>(raw() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename It>
  void shuffle(It first, It last) {
    auto count = static_cast<int>(last - first);
    for (int i = count - 1; i > 0; --i) {
      int j = uniform_int(0, i);
      std::swap(first[i], first[j]);
    }
  }

  // Independent stream for (seed, stream); splitmix64 finalizer.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
};

template <typename T>
void fill_normal(Tensor4<T>& t, Rng& rng, double stddev) {
  for (auto& v : t.data) v = static_cast<T>(rng.normal() * stddev);
}

template <typename T>
void fill_uniform(Tensor4<T>& t, Rng& rng, double lo, double hi) {
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
}

}  // namespace apnet
