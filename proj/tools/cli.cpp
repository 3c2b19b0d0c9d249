#include "cli.hpp"

#include <glob.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "streamvb/error.hpp"
#include "streamvb/io.hpp"
#include "streamvb/mapreduce.hpp"
#include "streamvb/secure_sum.hpp"
#include "streamvb/synthdata.hpp"

namespace streamvb::cli {

namespace {

using nlohmann::json;

struct Options {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string trace;
  std::string partitions;
  std::string parties;
  std::vector<std::string> inputs;
};

RunConfig effective_config(const Options& o, const std::string& pattern) {
  RunConfig cfg = load_run_config(o.config);
  if (!o.mode.empty()) cfg.mode = combine_mode_from_string(o.mode);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.trace.empty()) cfg.trace_path = o.trace;
  if (!pattern.empty()) {
    cfg.inputs = expand_glob(pattern);
  } else if (!o.inputs.empty()) {
    cfg.inputs = o.inputs;
  }
  return run_config_from_json(to_json(cfg));
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot write '" + path.string() + "'");
  f << text;
}

void write_outputs(const RunConfig& cfg, const json& posterior) {
  const std::filesystem::path dir(cfg.out_dir);
  write_file(dir / "effective_config.json", dump(to_json(cfg)) + "\n");
  write_file(dir / "posterior.json", dump(posterior) + "\n");
}

void print_summary(std::ostream& out, const Posterior& post, double n, const RunConfig& cfg) {
  out << "n = " << format_double(n) << ", sweeps = " << post.iterations
      << (post.converged ? ", converged" : ", not converged") << "\n";
  out << "wrote " << (std::filesystem::path(cfg.out_dir) / "posterior.json").string() << "\n";
}

SufficientStats pooled_stats(const Design& design, const std::vector<std::string>& files) {
  SufficientStats s(design.columns());
  for (const auto& f : files) s += design.stats(read_csv_file(f));
  return s;
}

int cmd_fit_batch(const Options& o, std::ostream& out) {
  const RunConfig cfg = effective_config(o, "");
  if (cfg.inputs.empty()) throw SpecError("fit-batch needs at least one input file");
  const Design design(cfg.model);
  const auto stats = pooled_stats(design, cfg.inputs);
  const auto post = fit(stats, cfg.model, QState::initial(cfg.model), cfg.fit);
  write_outputs(cfg, posterior_json(post, cfg.model, stats.n()));
  print_summary(out, post, stats.n(), cfg);
  return post.converged ? kOk : kNotConverged;
}

struct Sources {
  std::vector<Stream> hosts;
  std::optional<Stream> combiner_warm_up;
  std::vector<Stream> host_warm_ups;
};

Stream take_front(Stream& s, std::size_t count) {
  if (count > s.size()) throw SpecError("warm_up exceeds the rows available");
  Stream head = s;
  head.records.resize(count);
  s.records.erase(s.records.begin(), s.records.begin() + static_cast<std::ptrdiff_t>(count));
  return head;
}

// Multi-host sources get one extra stream whose head is the combiner warm-up;
// each host's own head becomes its local warm-up when host-local fits are on.
void split_warm_ups(Sources& src, std::vector<Stream> streams, const RunConfig& cfg) {
  if (cfg.warm_up > 0) {
    Stream extra = std::move(streams.back());
    streams.pop_back();
    src.combiner_warm_up = take_front(extra, cfg.warm_up);
    if (cfg.host_local_fit) {
      for (auto& s : streams) src.host_warm_ups.push_back(take_front(s, cfg.warm_up));
    }
  }
  src.hosts = std::move(streams);
}

Sources build_sources(const RunConfig& cfg) {
  Sources src;
  const std::size_t extra = cfg.warm_up > 0 ? 1 : 0;
  if (cfg.generator == "additive") {
    const std::size_t rows = cfg.per_host + (cfg.host_local_fit ? cfg.warm_up : 0);
    auto streams = synth::gen_additive_stream(cfg.seed, cfg.hosts + extra, std::max(rows, cfg.warm_up));
    for (std::size_t h = 0; h < cfg.hosts; ++h) streams[h].records.resize(rows);
    split_warm_ups(src, std::move(streams), cfg);
  } else if (cfg.generator == "drifting_spline") {
    auto streams = synth::gen_drifting_spline(cfg.seed, cfg.hosts + extra, cfg.steps, cfg.anchor_every);
    split_warm_ups(src, std::move(streams), cfg);
  } else if (cfg.generator == "grouped") {
    synth::GroupedConfig gc;
    gc.n = cfg.hosts * cfg.per_host + cfg.warm_up;
    Stream all = synth::gen_grouped_stream(cfg.seed, gc);
    if (cfg.warm_up > 0) src.combiner_warm_up = take_front(all, cfg.warm_up);
    src.hosts = synth::random_split(all, cfg.hosts, synth::split_seed(cfg.seed, cfg.hosts));
  } else if (cfg.generator == "drifting_linear" || cfg.generator == "drifting_sine") {
    Stream all = cfg.generator == "drifting_linear" ? synth::gen_drifting_linear(cfg.seed)
                                                    : synth::gen_drifting_sine(cfg.seed);
    if (cfg.warm_up > 0) src.combiner_warm_up = take_front(all, cfg.warm_up);
    src.hosts.push_back(std::move(all));
  } else {
    if (cfg.inputs.empty()) throw SpecError("simulate-stream needs a generator or input files");
    for (const auto& f : cfg.inputs) src.hosts.push_back(read_csv_file(f));
    if (cfg.warm_up > 0) src.combiner_warm_up = take_front(src.hosts.front(), cfg.warm_up);
  }
  return src;
}

int cmd_simulate_stream(const Options& o, std::ostream& out) {
  const RunConfig cfg = effective_config(o, "");
  const Design design(cfg.model);
  auto src = build_sources(cfg);

  SimulationConfig sc;
  sc.combiner.mode = cfg.mode;
  sc.combiner.window = cfg.window;
  sc.combiner.window_unit = cfg.window_unit;
  sc.combiner.decay = cfg.decay;
  sc.combiner.fit = cfg.fit;
  sc.combiner.converge_each_step = cfg.converge_each_step;
  sc.flush_threshold = cfg.flush_threshold;
  sc.rows_per_tick = cfg.rows_per_tick;
  sc.host_local_fit = cfg.host_local_fit;
  Simulation sim(design, sc, std::move(src.hosts), std::move(src.combiner_warm_up), std::move(src.host_warm_ups));

  std::optional<std::ofstream> trace_file;
  std::optional<TraceWriter> trace;
  if (!cfg.trace_path.empty()) {
    const std::filesystem::path tp(cfg.trace_path);
    if (tp.has_parent_path()) std::filesystem::create_directories(tp.parent_path());
    trace_file.emplace(tp, std::ios::binary);
    if (!*trace_file) throw ParseError("cannot write '" + cfg.trace_path + "'");
    trace.emplace(*trace_file, cfg.model);
  }

  Posterior post;
  std::size_t snapshots = 0;
  const auto ticks = sim.run([&](const Snapshot& s) {
    ++snapshots;
    post.q = s.q;
    post.trace.push_back(s.lower_bound);
    post.iterations += s.sweeps;
    if (trace) trace->write(s);
  });

  const auto& combiner = sim.combiner();
  if (cfg.mode == CombineMode::batch) {
    post = combiner.finalize();
    Snapshot s;
    s.tick = ticks;
    s.mode = cfg.mode;
    s.n = combiner.stats().n();
    s.gamma = combiner.gamma();
    s.lower_bound = post.trace.empty() ? 0.0 : post.trace.back();
    s.sweeps = post.iterations;
    s.q = post.q;
    ++snapshots;
    if (trace) trace->write(s);
  } else {
    if (snapshots == 0) throw SpecError("the stream produced no combiner steps");
    post.converged = cfg.converge_each_step;
  }

  auto j = posterior_json(post, cfg.model, combiner.stats().n());
  j["mode"] = to_string(cfg.mode);
  j["snapshots"] = snapshots;
  j["ticks"] = ticks;
  write_outputs(cfg, j);
  out << "mode = " << to_string(cfg.mode) << ", ticks = " << ticks << ", snapshots = " << snapshots << "\n";
  if (trace) out << "wrote " << cfg.trace_path << "\n";
  print_summary(out, post, combiner.stats().n(), cfg);
  return cfg.mode == CombineMode::batch && !post.converged ? kNotConverged : kOk;
}

int cmd_mapreduce(const Options& o, std::ostream& out) {
  const RunConfig cfg = effective_config(o, o.partitions);
  if (cfg.inputs.empty()) throw SpecError("mapreduce needs at least one partition");
  const Design design(cfg.model);
  std::vector<Partition> parts;
  for (std::size_t i = 0; i < cfg.inputs.size(); ++i) {
    parts.push_back(Partition{static_cast<int>(i), read_csv_file(cfg.inputs[i])});
  }
  MapReduceConfig mc;
  mc.fit = cfg.fit;
  mc.combiner_stage = cfg.combiner_stage;
  mc.workers = cfg.workers;
  const auto stats = reduce_job(parts, design, mc);
  const auto post = fit(stats, cfg.model, QState::initial(cfg.model), cfg.fit);
  write_outputs(cfg, posterior_json(post, cfg.model, stats.n()));
  out << "partitions = " << parts.size() << (cfg.combiner_stage ? ", combiner stage on" : "") << "\n";
  print_summary(out, post, stats.n(), cfg);
  return post.converged ? kOk : kNotConverged;
}

std::string hex(u128 v) {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(v >> 64),
                static_cast<unsigned long long>(v));
  return buf;
}

int cmd_secure_sum_demo(const Options& o, std::ostream& out) {
  const RunConfig cfg = effective_config(o, o.parties);
  if (cfg.inputs.size() <= 2) throw SpecError("secure summation needs more than two parties");
  const Design design(cfg.model);
  std::vector<SufficientStats> parties;
  for (const auto& f : cfg.inputs) parties.push_back(design.stats(read_csv_file(f)));

  const auto merged = secure_merge_traced(parties, cfg.seed);
  const std::size_t B = parties.size();
  const std::size_t shown = 3;
  for (std::size_t k = 0; k < merged.messages.size(); ++k) {
    const auto& m = merged.messages[k];
    out << "round " << k + 1 << ": party " << k % B << " -> party " << (k + 1) % B << ":";
    for (std::size_t e = 0; e < std::min(shown, m.payload.size()); ++e) out << " " << hex(m.payload[e]);
    if (m.payload.size() > shown) out << " ... (" << m.payload.size() << " entries)";
    out << "\n";
  }

  const auto post = fit(merged.stats, cfg.model, QState::initial(cfg.model), cfg.fit);
  const auto bytes = encode(merged.stats);
  write_file(std::filesystem::path(cfg.out_dir) / "merged_stats.bin", std::string(bytes.begin(), bytes.end()));
  write_outputs(cfg, posterior_json(post, cfg.model, merged.stats.n()));
  out << "parties = " << B << "\n";
  print_summary(out, post, merged.stats.n(), cfg);
  return post.converged ? kOk : kNotConverged;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "Run configuration (JSON)")->required();
  sub->add_option("--mode", o.mode, "Combiner mode")->check(CLI::IsMember({"batch", "online", "window", "decay"}));
  sub->add_option("--seed", o.seed, "Random seed");
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--trace", o.trace, "Trace CSV path");
}

}  // namespace

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  ::globfree(&g);
  std::sort(out.begin(), out.end());
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming variational Bayes for additive mixed models", "streamvb"};
  app.require_subcommand(1);
  Options o;

  auto* fit_batch = app.add_subcommand("fit-batch", "Batch fit on one or more CSV files");
  add_common(fit_batch, o);
  fit_batch->add_option("inputs", o.inputs, "Input CSV files");

  auto* simulate = app.add_subcommand("simulate-stream", "Distributed streaming simulation");
  add_common(simulate, o);
  simulate->add_option("inputs", o.inputs, "Host CSV files (one per host)");

  auto* mapreduce = app.add_subcommand("mapreduce", "Map/reduce job over partition files");
  add_common(mapreduce, o);
  mapreduce->add_option("--partitions", o.partitions, "Glob of partition CSV files");

  auto* secure = app.add_subcommand("secure-sum-demo", "Ring secure summation across party files");
  add_common(secure, o);
  secure->add_option("--parties", o.parties, "Glob of party CSV files");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kParseError;
  }

  try {
    if (*fit_batch) return cmd_fit_batch(o, out);
    if (*simulate) return cmd_simulate_stream(o, out);
    if (*mapreduce) return cmd_mapreduce(o, out);
    return cmd_secure_sum_demo(o, out);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kParseError;
  } catch (const RangeError& e) {
    err << "input error: " << e.what() << "\n";
    return kParseError;
  } catch (const SpecError& e) {
    err << "invalid specification: " << e.what() << "\n";
    return kInvalidSpec;
  } catch (const DimensionError& e) {
    err << "invalid specification: " << e.what() << "\n";
    return kInvalidSpec;
  } catch (const NumericalError& e) {
    err << "fit failed: " << e.what() << "\n";
    return kNotConverged;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kParseError;
  }
}

}  // namespace streamvb::cli
