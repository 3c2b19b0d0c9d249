#include "streamvb/runtime.hpp"

#include <algorithm>
#include <limits>
#include <utility>

#include "streamvb/error.hpp"

namespace streamvb {

namespace {

constexpr std::size_t kWarmUpOrigin = std::numeric_limits<std::size_t>::max();

SufficientStats sum_events(std::span<const StreamEvent> events, std::size_t P) {
  SufficientStats total(P);
  for (const auto& e : events) total += e.stats;
  return total;
}

bool same_event(const StreamEvent& a, const StreamEvent& b) {
  return a.origin == b.origin && a.sequence == b.sequence;
}

}  // namespace

WarmUp warm_up(const Stream& rows, const Design& design, const FitConfig& cfg) {
  if (rows.size() == 0) throw SpecError("warm-up requires at least one row");
  WarmUp out;
  out.stats = design.stats(rows);
  out.state = fit(out.stats, design.spec(), QState::initial(design.spec()), cfg).q;
  return out;
}

// ---------------------------------------------------------------------------

Host::Host(std::size_t id, const Design& design, std::size_t flush_threshold)
    : id_(id), design_(&design), threshold_(flush_threshold), buffer_(design.columns()),
      row_(static_cast<Eigen::Index>(design.columns())) {
  if (flush_threshold == 0) throw SpecError("flush threshold must be at least 1");
}

std::optional<StreamEvent> Host::step(const Binding& binding, const Record& record, std::int64_t tick) {
  design_->fill_row(binding, record, row_);
  return step(row_, record.y, tick);
}

std::optional<StreamEvent> Host::step(const Eigen::Ref<const Eigen::VectorXd>& c, double y, std::int64_t tick) {
  buffer_.add(c, y);
  if (buffer_.n() >= static_cast<double>(threshold_)) return emit(tick);
  return std::nullopt;
}

std::optional<StreamEvent> Host::flush(std::int64_t tick) {
  if (buffer_.empty()) return std::nullopt;
  return emit(tick);
}

StreamEvent Host::emit(std::int64_t tick) {
  StreamEvent event{id_, sequence_++, tick, std::move(buffer_)};
  buffer_ = SufficientStats(design_->columns());
  if (local_) {
    local_->stats += event.stats;
    local_->state = update_q(local_->stats, local_->state, design_->spec(), local_->path);
  }
  return event;
}

void Host::enable_local_fit(WarmUp start, CovariancePath path) {
  if (start.stats.dim() == 0) start.stats = SufficientStats(design_->columns());
  if (start.state.mu.size() == 0) start.state = QState::initial(design_->spec());
  local_ = Local{std::move(start.stats), std::move(start.state), path};
}

const SufficientStats& Host::local_stats() const {
  if (!local_) throw SpecError("host " + std::to_string(id_) + " has no local fit");
  return local_->stats;
}

const QState& Host::local_state() const {
  if (!local_) throw SpecError("host " + std::to_string(id_) + " has no local fit");
  return local_->state;
}

// ---------------------------------------------------------------------------

std::string to_string(CombineMode mode) {
  switch (mode) {
    case CombineMode::batch: return "batch";
    case CombineMode::online: return "online";
    case CombineMode::window: return "window";
    case CombineMode::decay: return "decay";
  }
  return "online";
}

CombineMode combine_mode_from_string(const std::string& s) {
  if (s == "batch") return CombineMode::batch;
  if (s == "online") return CombineMode::online;
  if (s == "window") return CombineMode::window;
  if (s == "decay") return CombineMode::decay;
  throw SpecError("unknown mode '" + s + "'");
}

Combiner::Combiner(ModelSpec spec, CombinerConfig cfg)
    : Combiner(spec, cfg, WarmUp{QState::initial(spec), SufficientStats(spec.P())}) {}

Combiner::Combiner(ModelSpec spec, CombinerConfig cfg, WarmUp start)
    : spec_(std::move(spec)), cfg_(std::move(cfg)), stats_(std::move(start.stats)), state_(std::move(start.state)) {
  layout_of(spec_);
  path_ = resolve_path(spec_, cfg_.fit.covariance_path);
  if (cfg_.mode == CombineMode::decay) validate(cfg_.decay);
  if (cfg_.mode == CombineMode::window && cfg_.window <= 0) throw SpecError("window width must be positive");
  if (stats_.dim() != spec_.P()) throw DimensionError("warm-up statistics do not match the model dimension");
  if (cfg_.mode == CombineMode::window && !stats_.empty()) {
    retained_.push_back(StreamEvent{kWarmUpOrigin, 0, 0, stats_});
  }
}

void Combiner::receive(StreamEvent event) {
  if (event.stats.dim() != spec_.P()) throw DimensionError("event statistics do not match the model dimension");
  if (event.stats.empty()) throw RangeError("stream events must carry at least one sample");
  buffer_.push_back(std::move(event));
}

std::optional<Snapshot> Combiner::drain(std::int64_t tick) {
  if (buffer_.empty()) return std::nullopt;
  std::vector<StreamEvent> events(std::make_move_iterator(buffer_.begin()), std::make_move_iterator(buffer_.end()));
  buffer_.clear();
  switch (cfg_.mode) {
    case CombineMode::batch:
      for (const auto& e : events) stats_ += e.stats;
      return std::nullopt;
    case CombineMode::online:
      return online_step(events, tick);
    case CombineMode::decay:
      return decay_step(events, tick);
    case CombineMode::window: {
      const auto expired = collect_expired(events, tick);
      return window_step(events, expired, tick);
    }
  }
  return std::nullopt;
}

Snapshot Combiner::online_step(std::span<const StreamEvent> events, std::int64_t tick) {
  stats_ += sum_events(events, spec_.P());
  ++t_;
  return sweep(tick);
}

Snapshot Combiner::window_step(std::span<const StreamEvent> added, std::span<const StreamEvent> expired,
                               std::int64_t tick) {
  for (const auto& e : added) {
    stats_ += e.stats;
    retained_.push_back(e);
  }
  for (const auto& e : expired) {
    auto it = std::find_if(retained_.begin(), retained_.end(), [&](const StreamEvent& r) { return same_event(r, e); });
    if (it == retained_.end()) {
      throw RangeError("cannot expire flush " + std::to_string(e.sequence) + " of host " + std::to_string(e.origin) +
                       ": it is not inside the window");
    }
    stats_ -= it->stats;
    retained_.erase(it);
  }
  ++t_;
  return sweep(tick);
}

Snapshot Combiner::decay_step(std::span<const StreamEvent> events, std::int64_t tick) {
  if (events.empty()) throw RangeError("decay step needs at least one event");
  const SufficientStats batch = sum_events(events, spec_.P());
  ++t_;
  auto result = decay(stats_, batch, learning_rate(cfg_.decay, t_));
  stats_ = std::move(result.stats);
  gamma_ = result.gamma;
  return sweep(tick);
}

std::vector<StreamEvent> Combiner::collect_expired(std::span<const StreamEvent> added, std::int64_t tick) const {
  std::vector<StreamEvent> expired;
  if (cfg_.window_unit == WindowUnit::ticks) {
    const std::int64_t cutoff = tick - cfg_.window;
    for (const auto& e : retained_) {
      if (e.origin == kWarmUpOrigin ? tick > cfg_.window : e.tick <= cutoff) expired.push_back(e);
    }
    for (const auto& e : added) {
      if (e.tick <= cutoff) expired.push_back(e);
    }
    return expired;
  }
  double n = stats_.n();
  for (const auto& e : added) n += e.stats.n();
  const double width = static_cast<double>(cfg_.window);
  auto take = [&](const StreamEvent& e) {
    if (n <= width) return false;
    n -= e.stats.n();
    expired.push_back(e);
    return true;
  };
  for (const auto& e : retained_) {
    if (!take(e)) return expired;
  }
  for (const auto& e : added) {
    if (!take(e)) return expired;
  }
  return expired;
}

Snapshot Combiner::sweep(std::int64_t tick) {
  Snapshot snap;
  snap.tick = tick;
  snap.mode = cfg_.mode;
  if (cfg_.converge_each_step) {
    FitConfig fc = cfg_.fit;
    fc.covariance_path = path_;
    auto post = fit(stats_, spec_, state_, fc, gamma_);
    state_ = std::move(post.q);
    snap.sweeps = post.iterations;
  } else {
    state_ = update_q(stats_, state_, spec_, path_, gamma_);
    snap.sweeps = 1;
  }
  snap.n = stats_.n();
  snap.gamma = gamma_;
  snap.lower_bound = lower_bound(stats_, state_, spec_, gamma_);
  snap.q = state_;
  return snap;
}

Posterior Combiner::finalize() const {
  FitConfig fc = cfg_.fit;
  fc.covariance_path = path_;
  return fit(stats_, spec_, state_, fc, gamma_);
}

Posterior combiner_batch(std::span<const StreamEvent> events, const ModelSpec& spec, const FitConfig& cfg) {
  std::vector<SufficientStats> parts;
  parts.reserve(events.size());
  for (const auto& e : events) parts.push_back(e.stats);
  return combiner_batch(parts, spec, cfg);
}

Posterior combiner_batch(std::span<const SufficientStats> host_stats, const ModelSpec& spec, const FitConfig& cfg) {
  SufficientStats total(spec.P());
  for (const auto& s : host_stats) total += s;
  return fit(total, spec, QState::initial(spec), cfg);
}

// ---------------------------------------------------------------------------

void EventQueue::push(StreamEvent event) {
  std::lock_guard lock(mutex_);
  events_.push_back(std::move(event));
}

std::vector<StreamEvent> EventQueue::drain_all() {
  std::lock_guard lock(mutex_);
  std::vector<StreamEvent> out(std::make_move_iterator(events_.begin()), std::make_move_iterator(events_.end()));
  events_.clear();
  return out;
}

std::size_t EventQueue::size() const {
  std::lock_guard lock(mutex_);
  return events_.size();
}

// ---------------------------------------------------------------------------

namespace {

Combiner make_combiner(const Design& design, const SimulationConfig& cfg, const std::optional<Stream>& warm) {
  if (warm) return Combiner(design.spec(), cfg.combiner, warm_up(*warm, design, cfg.combiner.fit));
  return Combiner(design.spec(), cfg.combiner);
}

}  // namespace

Simulation::Simulation(const Design& design, SimulationConfig cfg, std::vector<Stream> host_streams,
                       std::optional<Stream> combiner_warm_up, std::vector<Stream> host_warm_ups)
    : design_(&design), cfg_(std::move(cfg)), streams_(std::move(host_streams)),
      combiner_(make_combiner(design, cfg_, combiner_warm_up)) {
  if (streams_.empty()) throw SpecError("simulation needs at least one host");
  if (cfg_.rows_per_tick == 0) throw SpecError("rows_per_tick must be at least 1");
  if (!host_warm_ups.empty() && host_warm_ups.size() != streams_.size()) {
    throw SpecError("expected one warm-up stream per host");
  }
  for (std::size_t i = 0; i < streams_.size(); ++i) {
    bindings_.push_back(design.bind(streams_[i]));
    hosts_.emplace_back(i, design, cfg_.flush_threshold);
    if (cfg_.host_local_fit) {
      WarmUp start;
      if (!host_warm_ups.empty()) start = warm_up(host_warm_ups[i], design, cfg_.combiner.fit);
      hosts_.back().enable_local_fit(std::move(start), cfg_.combiner.fit.covariance_path);
    }
  }
}

std::int64_t Simulation::run(const std::function<void(const Snapshot&)>& on_snapshot) {
  std::size_t longest = 0;
  for (const auto& s : streams_) longest = std::max(longest, s.size());
  const std::size_t ticks = (longest + cfg_.rows_per_tick - 1) / cfg_.rows_per_tick;

  auto drain = [&](std::int64_t tick) {
    if (auto snap = combiner_.drain(tick); snap && on_snapshot) on_snapshot(*snap);
  };

  std::int64_t tick = 0;
  for (std::size_t k = 0; k < ticks; ++k) {
    tick = static_cast<std::int64_t>(k) + 1;
    const std::size_t begin = k * cfg_.rows_per_tick;
    for (std::size_t h = 0; h < hosts_.size(); ++h) {
      const auto& records = streams_[h].records;
      const std::size_t end = std::min(records.size(), begin + cfg_.rows_per_tick);
      for (std::size_t i = begin; i < end; ++i) {
        if (auto e = hosts_[h].step(bindings_[h], records[i], tick)) combiner_.receive(std::move(*e));
      }
    }
    drain(tick);
  }
  if (cfg_.flush_at_end) {
    bool any = false;
    for (auto& host : hosts_) {
      if (auto e = host.flush(tick + 1)) {
        combiner_.receive(std::move(*e));
        any = true;
      }
    }
    if (any) {
      ++tick;
      drain(tick);
    }
  }
  return tick;
}

}  // namespace streamvb
