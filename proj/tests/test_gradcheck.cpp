#include <catch2/catch_amalgamated.hpp>

#include "apnet/gradcheck_suite.hpp"

using namespace apnet;

TEST_CASE("finite-difference suite: every op and the tiny model, 10 seeds") {
  const auto results = run_gradcheck_suite(10, 1e-4);
  REQUIRE(results.size() >= 15);
  for (const auto& r : results) {
    INFO(r.name << " max_rel_err=" << r.max_rel_err);
    CHECK(r.pass);
    CHECK(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("grad_check flags a broken analytic gradient") {
  // forward computes x^2 but the recorded backward lies (factor 3)
  auto x = make_tensor<double>(1, 1, 1, 1);
  x->data[0] = 0.8;
  auto build = [&x](Tape<double>* tape) {
    auto out = make_tensor<double>(1, 1, 1, 1);
    out->data[0] = x->data[0] * x->data[0];
    if (tape)
      tape->record([&x, out]() { x->grad[0] += 3.0 * x->data[0] * out->grad[0]; });
    return out;
  };
  auto r = grad_check("broken", build, {x}, 1e-4);
  REQUIRE_FALSE(r.pass);
  REQUIRE(r.max_rel_err > 0.1);
}

TEST_CASE("grad_check requires a scalar output") {
  auto x = make_tensor<double>(1, 1, 2, 2);
  auto build = [&x](Tape<double>*) { return x; };
  REQUIRE_THROWS_AS(grad_check("nonscalar", build, {x}, 1e-4), ArgumentError);
}
