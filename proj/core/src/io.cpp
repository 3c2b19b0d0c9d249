#include "streamvb/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "streamvb/error.hpp"
#include "streamvb/summary.hpp"
#include "streamvb/synthdata.hpp"

namespace streamvb {

using nlohmann::json;

namespace {

std::string block_kind_name(BlockKind k) { return k == BlockKind::spline ? "spline" : "random_intercept"; }

BlockKind block_kind_from(const std::string& s) {
  if (s == "spline") return BlockKind::spline;
  if (s == "random_intercept") return BlockKind::random_intercept;
  throw ParseError("unknown block kind '" + s + "'");
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ParseError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad value for '") + key + "': " + e.what());
  }
}

void write_json(std::string& out, const json& j) {
  switch (j.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += json(k).dump();
        out += ':';
        write_json(out, v);
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        write_json(out, j[i]);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_double(v) : "null";
      break;
    }
    default: out += j.dump();
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string dump(const json& j) {
  std::string out;
  write_json(out, j);
  return out;
}

// ---------------------------------------------------------------------------

json to_json(const ModelSpec& spec) {
  json blocks = json::array();
  for (const auto& b : spec.blocks) {
    json jb{{"kind", block_kind_name(b.kind)}, {"name", b.name}, {"K", b.K}, {"source", b.source}};
    if (b.kind == BlockKind::spline) {
      jb["knots"] = {{"range_lo", b.knots.range_lo}, {"range_hi", b.knots.range_hi},
                     {"num_interior", b.knots.num_interior}};
      jb["out_of_range"] = b.out_of_range == OutOfRangePolicy::clamp ? "clamp" : "error";
    }
    blocks.push_back(jb);
  }
  return {{"intercept", spec.intercept},
          {"linear", spec.linear},
          {"blocks", blocks},
          {"priors", {{"sigma_beta_sq", spec.priors.sigma_beta_sq}, {"A_eps", spec.priors.A_eps}, {"A_u", spec.priors.A_u}}}};
}

ModelSpec model_spec_from_json(const json& j) {
  reject_unknown(j, {"intercept", "linear", "blocks", "priors"}, "model");
  ModelSpec spec;
  read_opt(j, "intercept", spec.intercept);
  read_opt(j, "linear", spec.linear);
  if (j.contains("blocks")) {
    if (!j["blocks"].is_array()) throw ParseError("'blocks' must be an array");
    for (const auto& jb : j["blocks"]) {
      reject_unknown(jb, {"kind", "name", "K", "source", "knots", "out_of_range"}, "block");
      BlockSpec b;
      std::string kind = "spline";
      read_opt(jb, "kind", kind);
      b.kind = block_kind_from(kind);
      read_opt(jb, "name", b.name);
      read_opt(jb, "source", b.source);
      if (b.name.empty()) b.name = b.source;
      if (jb.contains("knots")) {
        const auto& jk = jb["knots"];
        reject_unknown(jk, {"range_lo", "range_hi", "num_interior"}, "knots");
        read_opt(jk, "range_lo", b.knots.range_lo);
        read_opt(jk, "range_hi", b.knots.range_hi);
        read_opt(jk, "num_interior", b.knots.num_interior);
      }
      if (b.kind == BlockKind::spline) b.K = b.knots.num_interior + 2;
      read_opt(jb, "K", b.K);
      std::string oor = "clamp";
      read_opt(jb, "out_of_range", oor);
      if (oor == "clamp") {
        b.out_of_range = OutOfRangePolicy::clamp;
      } else if (oor == "error") {
        b.out_of_range = OutOfRangePolicy::error;
      } else {
        throw ParseError("out_of_range must be 'clamp' or 'error'");
      }
      spec.blocks.push_back(b);
    }
  }
  if (j.contains("priors")) {
    const auto& jp = j["priors"];
    reject_unknown(jp, {"sigma_beta_sq", "A_eps", "A_u"}, "priors");
    read_opt(jp, "sigma_beta_sq", spec.priors.sigma_beta_sq);
    read_opt(jp, "A_eps", spec.priors.A_eps);
    read_opt(jp, "A_u", spec.priors.A_u);
  }
  return with_default_priors(spec);
}

// ---------------------------------------------------------------------------

namespace {

std::string path_name(CovariancePath p) {
  switch (p) {
    case CovariancePath::dense: return "dense";
    case CovariancePath::block_fast: return "block_fast";
    case CovariancePath::automatic: return "automatic";
  }
  return "automatic";
}

CovariancePath path_from(const std::string& s) {
  if (s == "dense") return CovariancePath::dense;
  if (s == "block_fast") return CovariancePath::block_fast;
  if (s == "automatic") return CovariancePath::automatic;
  throw ParseError("unknown covariance path '" + s + "'");
}

}  // namespace

json to_json(const RunConfig& c) {
  return {
      {"model", to_json(c.model)},
      {"mode", to_string(c.mode)},
      {"fit",
       {{"rel_tol", c.fit.rel_tol},
        {"max_iter", c.fit.max_iter},
        {"param_tol", c.fit.param_tol},
        {"covariance_path", path_name(c.fit.covariance_path)}}},
      {"hosts", c.hosts},
      {"flush_threshold", c.flush_threshold},
      {"rows_per_tick", c.rows_per_tick},
      {"warm_up", c.warm_up},
      {"host_local_fit", c.host_local_fit},
      {"converge_each_step", c.converge_each_step},
      {"window", c.window},
      {"window_unit", c.window_unit == WindowUnit::ticks ? "ticks" : "samples"},
      {"decay",
       {{"mode", c.decay.mode == DecayConfig::Mode::constant ? "constant" : "decreasing"},
        {"tau", c.decay.tau},
        {"kappa", c.decay.kappa},
        {"rho", c.decay.rho}}},
      {"generator", c.generator},
      {"per_host", c.per_host},
      {"steps", c.steps},
      {"anchor_every", c.anchor_every},
      {"seed", c.seed},
      {"combiner_stage", c.combiner_stage},
      {"workers", c.workers},
      {"inputs", c.inputs},
      {"out_dir", c.out_dir},
      {"trace_path", c.trace_path},
  };
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j,
                 {"model", "mode", "fit", "hosts", "flush_threshold", "rows_per_tick", "warm_up", "host_local_fit",
                  "converge_each_step", "window", "window_unit", "decay", "generator", "per_host", "steps",
                  "anchor_every", "seed", "combiner_stage", "workers", "inputs", "out_dir", "trace_path"},
                 "config");
  RunConfig c;
  read_opt(j, "generator", c.generator);
  if (!c.generator.empty() && !synth::is_generator(c.generator)) {
    throw SpecError("unknown generator '" + c.generator + "'");
  }
  if (j.contains("model")) {
    c.model = model_spec_from_json(j["model"]);
  } else if (!c.generator.empty()) {
    c.model = synth::generator_spec(c.generator);
  } else {
    throw ParseError("config has no 'model'");
  }
  std::string mode = "batch";
  read_opt(j, "mode", mode);
  try {
    c.mode = combine_mode_from_string(mode);
  } catch (const SpecError& e) {
    throw ParseError(e.what());
  }
  if (j.contains("fit")) {
    const auto& f = j["fit"];
    reject_unknown(f, {"rel_tol", "max_iter", "param_tol", "covariance_path"}, "fit");
    read_opt(f, "rel_tol", c.fit.rel_tol);
    read_opt(f, "max_iter", c.fit.max_iter);
    read_opt(f, "param_tol", c.fit.param_tol);
    std::string path = "automatic";
    read_opt(f, "covariance_path", path);
    c.fit.covariance_path = path_from(path);
  }
  read_opt(j, "hosts", c.hosts);
  read_opt(j, "flush_threshold", c.flush_threshold);
  read_opt(j, "rows_per_tick", c.rows_per_tick);
  read_opt(j, "warm_up", c.warm_up);
  read_opt(j, "host_local_fit", c.host_local_fit);
  read_opt(j, "converge_each_step", c.converge_each_step);
  read_opt(j, "window", c.window);
  std::string unit = "ticks";
  read_opt(j, "window_unit", unit);
  if (unit == "ticks") {
    c.window_unit = WindowUnit::ticks;
  } else if (unit == "samples") {
    c.window_unit = WindowUnit::samples;
  } else {
    throw ParseError("window_unit must be 'ticks' or 'samples'");
  }
  if (j.contains("decay")) {
    const auto& d = j["decay"];
    reject_unknown(d, {"mode", "tau", "kappa", "rho"}, "decay");
    std::string dm = "constant";
    read_opt(d, "mode", dm);
    if (dm == "constant") {
      c.decay.mode = DecayConfig::Mode::constant;
    } else if (dm == "decreasing") {
      c.decay.mode = DecayConfig::Mode::decreasing;
    } else {
      throw ParseError("decay mode must be 'constant' or 'decreasing'");
    }
    read_opt(d, "tau", c.decay.tau);
    read_opt(d, "kappa", c.decay.kappa);
    read_opt(d, "rho", c.decay.rho);
  }
  read_opt(j, "per_host", c.per_host);
  read_opt(j, "steps", c.steps);
  read_opt(j, "anchor_every", c.anchor_every);
  read_opt(j, "seed", c.seed);
  read_opt(j, "combiner_stage", c.combiner_stage);
  read_opt(j, "workers", c.workers);
  read_opt(j, "inputs", c.inputs);
  read_opt(j, "out_dir", c.out_dir);
  read_opt(j, "trace_path", c.trace_path);

  const auto report = validate_spec(c.model);
  if (!report.ok()) {
    std::string msg = "invalid model:";
    for (const auto& v : report.violations) msg += " " + v + ";";
    throw SpecError(msg);
  }
  if (c.hosts == 0) throw SpecError("hosts must be at least 1");
  if (c.flush_threshold == 0) throw SpecError("flush_threshold must be at least 1");
  if (c.rows_per_tick == 0) throw SpecError("rows_per_tick must be at least 1");
  if (c.mode == CombineMode::window && c.window <= 0) throw SpecError("window must be positive");
  if (c.mode == CombineMode::decay) validate(c.decay);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

// ---------------------------------------------------------------------------

json posterior_json(const Posterior& post, const ModelSpec& spec, double n) {
  json coefs = json::array();
  for (const auto& row : coefficient_table(post.q, spec)) {
    coefs.push_back({{"name", row.name}, {"mean", row.mean}, {"sd", row.sd}, {"lo95", row.lo95}, {"hi95", row.hi95}});
  }
  json blocks = json::array();
  for (std::size_t l = 0; l < spec.blocks.size(); ++l) {
    blocks.push_back({{"name", spec.blocks[l].name},
                      {"K", spec.blocks[l].K},
                      {"mu_inv_sigma_sq", post.q.mu_inv_sigu(static_cast<Eigen::Index>(l))},
                      {"mu_inv_a", post.q.mu_inv_au(static_cast<Eigen::Index>(l))}});
  }
  std::vector<double> mu(post.q.mu.data(), post.q.mu.data() + post.q.mu.size());
  return {{"schema_version", kSchemaVersion},
          {"converged", post.converged},
          {"iterations", post.iterations},
          {"n", n},
          {"coefficients", coefs},
          {"mu", mu},
          {"mu_inv_sigma_eps_sq", post.q.mu_inv_sigeps},
          {"mu_inv_a_eps", post.q.mu_inv_aeps},
          {"blocks", blocks},
          {"lower_bound_trace", post.trace}};
}

// ---------------------------------------------------------------------------

Stream read_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(source + ":" + std::to_string(lineno) + ": " + what);
  };
  if (!std::getline(in, line)) {
    lineno = 1;
    fail("missing header row");
  }
  ++lineno;
  const auto header = split_csv_line(line);
  std::ptrdiff_t y_col = -1, g_col = -1;
  std::vector<std::size_t> x_cols;
  Stream s;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& h = header[i];
    if (h.empty()) fail("empty column name");
    if (!seen.insert(h).second) fail("duplicate column '" + h + "'");
    if (h == "y") {
      y_col = static_cast<std::ptrdiff_t>(i);
    } else if (h == "group") {
      g_col = static_cast<std::ptrdiff_t>(i);
    } else {
      x_cols.push_back(i);
      s.predictors.push_back(h);
    }
  }
  if (y_col < 0) fail("no 'y' column");
  if (g_col >= 0) s.group_columns = {"group"};
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      fail("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    Record r;
    if (!parse_number(cells[static_cast<std::size_t>(y_col)], r.y) || !std::isfinite(r.y)) fail("bad response value");
    for (std::size_t c : x_cols) {
      double v = 0.0;
      if (!parse_number(cells[c], v) || !std::isfinite(v)) fail("bad value in column '" + header[c] + "'");
      r.x.push_back(v);
    }
    if (g_col >= 0) {
      int g = 0;
      if (!parse_number(cells[static_cast<std::size_t>(g_col)], g)) fail("bad group id");
      r.groups.push_back(g);
    }
    s.records.push_back(std::move(r));
  }
  return s;
}

Stream read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_csv(in, path);
}

void write_csv(std::ostream& out, const Stream& stream) {
  bool first = true;
  auto sep = [&] {
    if (!first) out << ',';
    first = false;
  };
  for (const auto& p : stream.predictors) {
    sep();
    out << p;
  }
  for (const auto& g : stream.group_columns) {
    sep();
    out << g;
  }
  sep();
  out << "y\n";
  for (const auto& r : stream.records) {
    first = true;
    for (double v : r.x) {
      sep();
      out << format_double(v);
    }
    for (int g : r.groups) {
      sep();
      out << g;
    }
    sep();
    out << format_double(r.y) << '\n';
  }
}

void append_stream(Stream& base, const Stream& more) {
  if (base.predictors.empty() && base.group_columns.empty() && base.records.empty()) {
    base = more;
    return;
  }
  auto index_of = [](const std::vector<std::string>& names, const std::string& n) -> std::size_t {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) throw ParseError("inputs disagree on columns: missing '" + n + "'");
    return static_cast<std::size_t>(it - names.begin());
  };
  if (more.predictors.size() != base.predictors.size() || more.group_columns.size() != base.group_columns.size()) {
    throw ParseError("inputs disagree on columns");
  }
  std::vector<std::size_t> xmap, gmap;
  for (const auto& p : base.predictors) xmap.push_back(index_of(more.predictors, p));
  for (const auto& g : base.group_columns) gmap.push_back(index_of(more.group_columns, g));
  for (const auto& r : more.records) {
    Record out;
    out.y = r.y;
    for (std::size_t k : xmap) out.x.push_back(r.x[k]);
    for (std::size_t k : gmap) out.groups.push_back(r.groups[k]);
    base.records.push_back(std::move(out));
  }
}

// ---------------------------------------------------------------------------

TraceWriter::TraceWriter(std::ostream& out, const ModelSpec& spec) : out_(&out), spec_(spec) {
  const auto cols = header(spec_);
  for (std::size_t i = 0; i < cols.size(); ++i) *out_ << (i ? "," : "") << cols[i];
  *out_ << '\n';
}

std::vector<std::string> TraceWriter::header(const ModelSpec& spec) {
  std::vector<std::string> cols{"tick", "mode", "n", "gamma", "lower_bound"};
  const auto names = column_names(spec);
  for (std::size_t i = 0; i < spec.p(); ++i) {
    const std::string base = names[i] == "(Intercept)" ? "intercept" : names[i];
    for (const char* suffix : {"_mean", "_lo95", "_hi95"}) cols.push_back(base + suffix);
  }
  for (const auto& b : spec.blocks) cols.push_back(b.name + "_mu_inv_sigma_sq");
  return cols;
}

void TraceWriter::write(const Snapshot& snap) {
  auto& o = *out_;
  o << snap.tick << ',' << to_string(snap.mode) << ',' << format_double(snap.n) << ',' << format_double(snap.gamma)
    << ',' << format_double(snap.lower_bound);
  for (const auto& row : coefficient_table(snap.q, spec_)) {
    o << ',' << format_double(row.mean) << ',' << format_double(row.lo95) << ',' << format_double(row.hi95);
  }
  for (Eigen::Index l = 0; l < snap.q.mu_inv_sigu.size(); ++l) o << ',' << format_double(snap.q.mu_inv_sigu(l));
  o << '\n';
}

}  // namespace streamvb
