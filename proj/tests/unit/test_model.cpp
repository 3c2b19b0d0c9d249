#include "doctest.h"
#include "streamvb/error.hpp"
#include "streamvb/model.hpp"
#include "support/helpers.hpp"

using namespace streamvb;
using testing_support::random_intercept;
using testing_support::spline;

namespace {

bool has_violation(const ValidationReport& r, const std::string& needle) {
  for (const auto& v : r.violations) {
    if (v.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("intercept plus one linear term with default priors is valid") {
  ModelSpec spec;
  spec.linear = {"x"};
  const auto r = validate_spec(spec);
  CHECK(r.ok());
  REQUIRE(r.layout);
  CHECK(r.layout->total == 2);
  CHECK(spec.priors.sigma_beta_sq == 1e8);
  CHECK(spec.priors.A_eps == 1e5);
}

TEST_CASE("empty block is rejected") {
  ModelSpec spec;
  BlockSpec b = spline("x", 2);
  b.K = 0;
  spec.blocks = {b};
  spec.priors.A_u = {1e5};
  const auto r = validate_spec(spec);
  CHECK_FALSE(r.ok());
  CHECK(has_violation(r, "empty block"));
  CHECK_THROWS_AS(layout_of(spec), SpecError);
}

TEST_CASE("random intercept block must come last") {
  ModelSpec spec;
  spec.linear = {"x"};
  spec.blocks = {random_intercept("g", 5), spline("x", 10)};
  spec = with_default_priors(spec);
  const auto r = validate_spec(spec);
  CHECK_FALSE(r.ok());
  CHECK(has_violation(r, "intercept block must be last"));
}

TEST_CASE("hyperparameters must be positive and A_u must match the blocks") {
  ModelSpec spec;
  spec.blocks = {spline("x", 10)};
  spec.priors.A_u = {1e5, 1e5};
  CHECK(has_violation(validate_spec(spec), "A_u"));
  spec.priors.A_u = {-1.0};
  CHECK_FALSE(validate_spec(spec).ok());
  spec.priors.A_u = {1e5};
  spec.priors.sigma_beta_sq = 0.0;
  CHECK_FALSE(validate_spec(spec).ok());
  spec.priors.sigma_beta_sq = 1e8;
  spec.priors.A_eps = std::numeric_limits<double>::infinity();
  CHECK_FALSE(validate_spec(spec).ok());
}

TEST_CASE("no fixed effects is rejected") {
  ModelSpec spec;
  spec.intercept = false;
  CHECK_FALSE(validate_spec(spec).ok());
}

TEST_CASE("layout ranges are contiguous and every column has one owner") {
  ModelSpec spec;
  spec.linear = {"x1", "x2"};
  spec.blocks = {spline("x1", 10), spline("x2", 6), random_intercept("g", 7)};
  spec = with_default_priors(spec);
  const auto layout = layout_of(spec);
  CHECK(layout.total == spec.P());
  CHECK(layout.total == 3 + 10 + 6 + 7);
  CHECK(layout.fixed.begin == 0);
  CHECK(layout.fixed.end == 3);
  std::size_t prev = layout.fixed.end;
  for (const auto& b : layout.blocks) {
    CHECK(b.begin == prev);
    prev = b.end;
  }
  CHECK(prev == layout.total);
  CHECK(layout.fast_path_eligible);
  CHECK(layout.leading_columns() == 19);
  std::vector<int> counts(layout.total, 0);
  for (std::size_t c = 0; c < layout.total; ++c) {
    const int o = layout.owner(c);
    CHECK(o >= -1);
    CHECK(o < 3);
    counts[c]++;
  }
  CHECK_THROWS_AS(layout.owner(layout.total), RangeError);
}

TEST_CASE("two trailing random intercepts are valid but dense-path only") {
  ModelSpec spec;
  spec.blocks = {spline("x", 10), random_intercept("g1", 4), random_intercept("g2", 3)};
  spec = with_default_priors(spec);
  const auto r = validate_spec(spec);
  CHECK(r.ok());
  CHECK(r.dense_path_only);
  CHECK_FALSE(r.layout->fast_path_eligible);
}

TEST_CASE("spline K must follow from the knot count") {
  ModelSpec spec;
  BlockSpec b = spline("x", 10);
  b.knots.num_interior = 5;
  spec.blocks = {b};
  spec = with_default_priors(spec);
  CHECK(has_violation(validate_spec(spec), "num_interior + 2"));
}

TEST_CASE("column names") {
  ModelSpec spec;
  spec.linear = {"x"};
  spec.blocks = {spline("x", 3)};
  spec = with_default_priors(spec);
  const auto names = column_names(spec);
  REQUIRE(names.size() == 5);
  CHECK(names[0] == "(Intercept)");
  CHECK(names[1] == "x");
  CHECK(names[2] == "f_x[0]");
  CHECK(names[4] == "f_x[2]");
}
