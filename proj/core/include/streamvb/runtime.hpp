#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamvb/design.hpp"
#include "streamvb/mfvb.hpp"
#include "streamvb/suffstats.hpp"

namespace streamvb {

/// A host's flushed buffer: summed statistics of at least one sample.
struct StreamEvent {
  std::size_t origin = 0;
  std::uint64_t sequence = 0;  // per-origin flush counter
  std::int64_t tick = 0;
  SufficientStats stats;
};

/// Starting values and accumulated statistics from a batch fit on an initial
/// subset of the data.
struct WarmUp {
  QState state;
  SufficientStats stats;
};

WarmUp warm_up(const Stream& rows, const Design& design, const FitConfig& cfg = {});

/// A data host: accumulates per-sample statistics and flushes the sum once
/// `flush_threshold` samples are buffered. Optionally keeps its own online
/// fit over everything it has seen.
class Host {
 public:
  Host(std::size_t id, const Design& design, std::size_t flush_threshold);

  std::size_t id() const { return id_; }
  std::size_t flush_threshold() const { return threshold_; }
  const SufficientStats& buffer() const { return buffer_; }

  std::optional<StreamEvent> step(const Binding& binding, const Record& record, std::int64_t tick);
  std::optional<StreamEvent> step(const Eigen::Ref<const Eigen::VectorXd>& c, double y, std::int64_t tick);
  /// Emits whatever is buffered (fewer than threshold samples), if anything.
  std::optional<StreamEvent> flush(std::int64_t tick);

  /// Turns on the local fit, starting from a warm-up (or empty stats and the
  /// default state). One sweep runs at every flush.
  void enable_local_fit(WarmUp start, CovariancePath path = CovariancePath::automatic);
  bool local_fit_enabled() const { return local_.has_value(); }
  const SufficientStats& local_stats() const;
  const QState& local_state() const;

 private:
  StreamEvent emit(std::int64_t tick);

  std::size_t id_;
  const Design* design_;
  std::size_t threshold_;
  SufficientStats buffer_;
  std::uint64_t sequence_ = 0;
  Eigen::VectorXd row_;
  struct Local {
    SufficientStats stats;
    QState state;
    CovariancePath path;
  };
  std::optional<Local> local_;
};

enum class CombineMode { batch, online, window, decay };

std::string to_string(CombineMode mode);
CombineMode combine_mode_from_string(const std::string& s);

enum class WindowUnit { ticks, samples };

struct CombinerConfig {
  CombineMode mode = CombineMode::online;
  /// Window width, in ticks or in samples (window mode).
  std::int64_t window = 100;
  WindowUnit window_unit = WindowUnit::ticks;
  DecayConfig decay;
  FitConfig fit;
  /// false: exactly one sweep per drain. true: iterate to convergence.
  bool converge_each_step = false;
};

struct Snapshot {
  std::int64_t tick = 0;
  CombineMode mode = CombineMode::online;
  double n = 0.0;
  double gamma = 1.0;
  double lower_bound = 0.0;
  int sweeps = 0;
  QState q;
};

/// The party that merges host statistics and runs the global updates.
///
/// Events are queued with receive() and processed by drain(), which performs
/// one step of the configured mode over everything queued.
class Combiner {
 public:
  Combiner(ModelSpec spec, CombinerConfig cfg);
  Combiner(ModelSpec spec, CombinerConfig cfg, WarmUp start);

  const CombinerConfig& config() const { return cfg_; }
  const ModelSpec& spec() const { return spec_; }
  const SufficientStats& stats() const { return stats_; }
  const QState& state() const { return state_; }
  double gamma() const { return gamma_; }
  std::uint64_t step_count() const { return t_; }

  void receive(StreamEvent event);
  std::size_t pending() const { return buffer_.size(); }
  /// Processes every queued event; nullopt when nothing was queued or in
  /// batch mode (which only accumulates until finalize()).
  std::optional<Snapshot> drain(std::int64_t tick);

  /// Adds the summed events and runs one sweep (or converges).
  Snapshot online_step(std::span<const StreamEvent> events, std::int64_t tick);
  /// Adds `added`, removes `expired` (which must be retained), then sweeps.
  Snapshot window_step(std::span<const StreamEvent> added, std::span<const StreamEvent> expired, std::int64_t tick);
  /// Reweights with the next learning rate, then runs the gamma-scaled sweep.
  Snapshot decay_step(std::span<const StreamEvent> events, std::int64_t tick);

  /// Fit to convergence on the accumulated statistics from the current state.
  Posterior finalize() const;

  /// Flushes currently inside the time window (window mode).
  std::size_t retained_count() const { return retained_.size(); }
  const std::deque<StreamEvent>& retained() const { return retained_; }

 private:
  Snapshot sweep(std::int64_t tick);
  std::vector<StreamEvent> collect_expired(std::span<const StreamEvent> added, std::int64_t tick) const;

  ModelSpec spec_;
  CombinerConfig cfg_;
  CovariancePath path_;
  SufficientStats stats_;
  QState state_;
  double gamma_ = 1.0;
  std::uint64_t t_ = 0;
  std::deque<StreamEvent> buffer_;
  std::deque<StreamEvent> retained_;
};

/// Merges one summary per host and fits to convergence from the default
/// starting state.
Posterior combiner_batch(std::span<const StreamEvent> events, const ModelSpec& spec, const FitConfig& cfg = {});
Posterior combiner_batch(std::span<const SufficientStats> host_stats, const ModelSpec& spec,
                         const FitConfig& cfg = {});

/// Thread-safe multi-producer queue feeding a single combiner.
class EventQueue {
 public:
  void push(StreamEvent event);
  std::vector<StreamEvent> drain_all();
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::deque<StreamEvent> events_;
};

struct SimulationConfig {
  CombinerConfig combiner;
  std::size_t flush_threshold = 10;
  std::size_t rows_per_tick = 1;
  bool host_local_fit = false;
  /// Flush partially filled host buffers once every stream is exhausted.
  bool flush_at_end = true;
};

/// Discrete-time driver: at every tick each host ingests its next
/// rows_per_tick records, flushes go to the combiner, and the combiner drains
/// once per tick that produced at least one event.
class Simulation {
 public:
  Simulation(const Design& design, SimulationConfig cfg, std::vector<Stream> host_streams,
             std::optional<Stream> combiner_warm_up = std::nullopt, std::vector<Stream> host_warm_ups = {});

  /// Runs to exhaustion; returns the number of ticks.
  std::int64_t run(const std::function<void(const Snapshot&)>& on_snapshot = {});

  const Combiner& combiner() const { return combiner_; }
  const std::vector<Host>& hosts() const { return hosts_; }

 private:
  const Design* design_;
  SimulationConfig cfg_;
  std::vector<Stream> streams_;
  std::vector<Binding> bindings_;
  std::vector<Host> hosts_;
  Combiner combiner_;
};

}  // namespace streamvb
