#include <sstream>

#include "doctest.h"
#include "streamvb/error.hpp"
#include "streamvb/io.hpp"
#include "streamvb/synthdata.hpp"
#include "support/helpers.hpp"

using namespace streamvb;
using nlohmann::json;

namespace {

std::string parse_error_message(const std::string& csv) {
  std::istringstream in(csv);
  try {
    read_csv(in, "data.csv");
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("model spec json") {
  const auto spec = synth::grouped_spec();
  const auto j = to_json(spec);
  CHECK(model_spec_from_json(j) == spec);
  CHECK(model_spec_from_json(json::parse(j.dump())) == spec);

  const auto minimal = model_spec_from_json(json::parse(R"({
    "linear": ["x"],
    "blocks": [{"kind": "spline", "source": "x", "knots": {"range_lo": 0, "range_hi": 1, "num_interior": 8}}]
  })"));
  REQUIRE(minimal.blocks.size() == 1);
  CHECK(minimal.blocks[0].K == 10);
  CHECK(minimal.blocks[0].name == "x");
  CHECK(minimal.priors == with_default_priors(minimal).priors);

  CHECK_THROWS_AS(model_spec_from_json(json::parse(R"({"linear": ["x"], "colour": 1})")), ParseError);
  CHECK_THROWS_AS(model_spec_from_json(json::parse(R"({"blocks": [{"kind": "wavelet"}]})")), ParseError);
  CHECK_THROWS_AS(model_spec_from_json(json::parse(R"({"linear": "x"})")), ParseError);
}

TEST_CASE("run config json") {
  RunConfig c;
  c.model = synth::drifting_sine_spec();
  c.mode = CombineMode::decay;
  c.decay.mode = DecayConfig::Mode::decreasing;
  c.decay.tau = 2.0;
  c.decay.kappa = 0.75;
  c.fit.rel_tol = 1e-10;
  c.fit.covariance_path = CovariancePath::dense;
  c.hosts = 9;
  c.window_unit = WindowUnit::samples;
  c.generator = "drifting_sine";
  c.seed = 123456789012345ULL;
  c.inputs = {"a.csv", "b.csv"};
  c.trace_path = "trace.csv";
  const auto back = run_config_from_json(json::parse(dump(to_json(c))));
  CHECK(back == c);

  const auto defaults = run_config_from_json(json::parse(R"({"model": {"linear": ["x"]}})"));
  CHECK(defaults.mode == CombineMode::batch);
  CHECK(defaults.fit == FitConfig{});

  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"model": {}, "hosts": 0})")), SpecError);
  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"model": {}, "mode": "sideways"})")), ParseError);
  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"model": {}, "extra": true})")), ParseError);
  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"mode": "batch"})")), ParseError);
  CHECK_THROWS_AS(
      run_config_from_json(json::parse(R"({"model": {"blocks": [{"kind": "spline", "source": "x", "K": 1}]}})")),
      SpecError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ParseError);
}

TEST_CASE("json number formatting") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(2.0) == "2");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(dump(json{{"a", 0.5}, {"b", {1, 2}}}) == R"({"a":0.5,"b":[1,2]})");
  CHECK(dump(json{{"s", "q\"uote"}}) == R"({"s":"q\"uote"})");
}

TEST_CASE("posterior json") {
  ModelSpec spec;
  spec.linear = {"x1"};
  spec.blocks = {testing_support::spline("x1", 5)};
  spec = with_default_priors(spec);
  std::mt19937_64 rng(1);
  const Design d(spec);
  const auto stats = d.stats(testing_support::random_stream(rng, 80, 1));
  const auto post = fit(stats, spec, QState::initial(spec));
  const auto j = posterior_json(post, spec, stats.n());
  CHECK(j["schema_version"] == 1);
  CHECK(j["converged"] == post.converged);
  CHECK(j["n"] == 80.0);
  CHECK(j["mu"].size() == 7);
  CHECK(j["coefficients"].size() == 2);
  CHECK(j["blocks"][0]["name"] == "f_x1");
  CHECK(j["lower_bound_trace"].size() == post.trace.size());
  CHECK(json::parse(dump(j))["mu"][3].get<double>() == post.q.mu(3));
}

TEST_CASE("csv") {
  SUBCASE("round trip") {
    const auto s = synth::gen_grouped_stream(2, {.n = 50});
    std::stringstream buf;
    write_csv(buf, s);
    CHECK(read_csv(buf) == s);
  }

  SUBCASE("column roles") {
    std::istringstream in("y,x2,group,x1\n1.5,2,7,3\n\n-1e-3,0.5,0,1\n");
    const auto s = read_csv(in);
    CHECK(s.predictors == std::vector<std::string>{"x2", "x1"});
    CHECK(s.group_columns == std::vector<std::string>{"group"});
    REQUIRE(s.size() == 2);
    CHECK(s.records[0].x == std::vector<double>{2.0, 3.0});
    CHECK(s.records[0].groups == std::vector<int>{7});
    CHECK(s.records[1].y == -1e-3);
  }

  SUBCASE("errors carry the line number") {
    CHECK(parse_error_message("x,y\n1,2\n3\n").rfind("data.csv:3:", 0) == 0);
    CHECK(parse_error_message("x,y\n1,2\n1,2\n1,abc\n").rfind("data.csv:4:", 0) == 0);
    CHECK(parse_error_message("x,y\n1,nan\n").rfind("data.csv:2:", 0) == 0);
    CHECK(parse_error_message("x,z\n1,2\n").rfind("data.csv:1:", 0) == 0);
    CHECK(parse_error_message("x,x,y\n").rfind("data.csv:1:", 0) == 0);
    CHECK(parse_error_message("y,group\n1,2.5\n").rfind("data.csv:2:", 0) == 0);
    CHECK(parse_error_message("").rfind("data.csv:1:", 0) == 0);
    CHECK_THROWS_AS(read_csv_file("/nonexistent.csv"), ParseError);
  }

  SUBCASE("append reorders columns by name") {
    std::istringstream a("x1,x2,y\n1,2,3\n"), b("x2,y,x1\n20,30,10\n"), c("x1,x3,y\n1,2,3\n");
    Stream base;
    append_stream(base, read_csv(a));
    append_stream(base, read_csv(b));
    REQUIRE(base.size() == 2);
    CHECK(base.records[1].x == std::vector<double>{10.0, 20.0});
    CHECK(base.records[1].y == 30.0);
    CHECK_THROWS_AS(append_stream(base, read_csv(c)), ParseError);
  }
}

TEST_CASE("trace writer") {
  ModelSpec spec;
  spec.linear = {"x"};
  spec.blocks = {testing_support::spline("x", 4)};
  spec = with_default_priors(spec);
  const auto cols = TraceWriter::header(spec);
  CHECK(cols == std::vector<std::string>{"tick", "mode", "n", "gamma", "lower_bound", "intercept_mean",
                                         "intercept_lo95", "intercept_hi95", "x_mean", "x_lo95", "x_hi95",
                                         "f_x_mu_inv_sigma_sq"});
  std::ostringstream out;
  TraceWriter w(out, spec);
  Snapshot snap;
  snap.tick = 3;
  snap.n = 12;
  snap.gamma = 1.5;
  snap.lower_bound = -4.25;
  snap.q = QState::initial(spec);
  w.write(snap);
  const auto text = out.str();
  const auto second = text.substr(text.find('\n') + 1);
  CHECK(second.rfind("3,online,12,1.5,-4.25,0,", 0) == 0);
  CHECK(std::count(second.begin(), second.end(), ',') == static_cast<long>(cols.size() - 1));
}
