#pragma once
// Central finite-difference gradient checker. Runs at double precision with
// step 1e-5 and compares against the analytic backward pass of each op.
// Relative error is |a - n| / max(|a|, |n|, 1).

#include <functional>
#include <string>
#include <vector>

#include "apnet/ops.hpp"
#include "apnet/tensor.hpp"

namespace apnet {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  bool pass = false;
  // location of the worst element, for diagnostics
  int worst_input = -1;
  std::size_t worst_elem = 0;
};

// `build` runs the forward computation from the given input tensors (which it
// must capture by pointer, not copy) and returns a scalar output. It is
// invoked once with a tape for the analytic pass, then repeatedly without one
// while elements of `inputs` are perturbed.
inline GradCheckResult grad_check(
    const std::string& name,
    const std::function<TensorPtr<double>(Tape<double>*)>& build,
    const std::vector<TensorPtr<double>>& inputs, double tolerance = 1e-4,
    double step = 1e-5) {
  GradCheckResult r;
  r.name = name;
  r.tolerance = tolerance;

  for (auto& t : inputs) t->zero_grad();
  Tape<double> tape;
  auto out = build(&tape);
  if (!out || out->numel() != 1)
    throw ArgumentError("grad_check: build() must return a scalar tensor");
  backward_scalar(tape, out);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) analytic.push_back(t->grad);

  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& t = *inputs[ti];
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double saved = t.data[i];
      t.data[i] = saved + step;
      const double fp = build(nullptr)->data[0];
      t.data[i] = saved - step;
      const double fm = build(nullptr)->data[0];
      t.data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[ti][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1.0});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > r.max_rel_err) {
        r.max_rel_err = rel;
        r.worst_input = static_cast<int>(ti);
        r.worst_elem = i;
      }
    }
  }
  r.pass = r.max_rel_err < tolerance;
  return r;
}

// Convenience: random projection weights for scalarizing an op output.
inline std::vector<double> random_projection(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

}  // namespace apnet
