#pragma once

#include <cstdint>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "streamvb/design.hpp"
#include "streamvb/mfvb.hpp"
#include "streamvb/runtime.hpp"

namespace streamvb {

inline constexpr int kSchemaVersion = 1;

// --- Model spec -----------------------------------------------------------

nlohmann::json to_json(const ModelSpec& spec);
/// Missing priors take their defaults; a spline's K defaults to
/// num_interior + 2. Throws ParseError for malformed documents.
ModelSpec model_spec_from_json(const nlohmann::json& j);

// --- Run configuration ----------------------------------------------------

/// Everything a command needs besides its input files.
struct RunConfig {
  ModelSpec model;
  CombineMode mode = CombineMode::batch;
  FitConfig fit;

  std::size_t hosts = 1;
  std::size_t flush_threshold = 10;
  std::size_t rows_per_tick = 1;
  std::size_t warm_up = 0;  // rows used for warm-up fits
  bool host_local_fit = false;
  bool converge_each_step = false;

  std::int64_t window = 100;
  WindowUnit window_unit = WindowUnit::ticks;
  DecayConfig decay;

  /// Synthetic source for simulate-stream: additive, drifting_linear,
  /// drifting_sine, drifting_spline or grouped. Empty reads `inputs`.
  std::string generator;
  std::size_t per_host = 1000;
  std::size_t steps = 1000;
  std::size_t anchor_every = 2500;
  std::uint64_t seed = 1;

  bool combiner_stage = false;
  std::size_t workers = 0;

  std::vector<std::string> inputs;
  std::string out_dir = ".";
  std::string trace_path;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Unknown keys are rejected; absent keys keep their defaults. The model is
/// validated (SpecError) after parsing (ParseError). Without "model" the
/// generator's own model is used.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// --- Posterior ------------------------------------------------------------

/// Coefficient table, full mean vector, reciprocal-variance means, lower
/// bound trace and convergence metadata, under "schema_version".
nlohmann::json posterior_json(const Posterior& post, const ModelSpec& spec, double n);

/// Compact text with 17 significant digits for every double.
std::string dump(const nlohmann::json& j);

// --- CSV ------------------------------------------------------------------

/// Header row; "y" is the response, "group" (optional) the random intercept
/// id, every other column a predictor. ParseError messages carry the line.
Stream read_csv(std::istream& in, const std::string& source = "<input>");
Stream read_csv_file(const std::string& path);
void write_csv(std::ostream& out, const Stream& stream);

/// Appends the records of `more` to `base`, reordering columns by name.
void append_stream(Stream& base, const Stream& more);

// --- Trace ----------------------------------------------------------------

/// One row per snapshot. Columns: tick, mode, n, gamma, lower_bound, then
/// <name>_mean, <name>_lo95, <name>_hi95 per fixed effect, then
/// <block>_mu_inv_sigma_sq per block.
class TraceWriter {
 public:
  TraceWriter(std::ostream& out, const ModelSpec& spec);
  void write(const Snapshot& snap);
  static std::vector<std::string> header(const ModelSpec& spec);

 private:
  std::ostream* out_;
  ModelSpec spec_;
};

std::string format_double(double v);

}  // namespace streamvb
