#include "streamvb/mapreduce.hpp"

#include <cmath>
#include <set>
#include <string>

#include "parallel.hpp"
#include "streamvb/error.hpp"

namespace streamvb {

namespace {

EmissionPayload zero_like(const EmissionPayload& p) {
  return std::visit(
      [](const auto& v) -> EmissionPayload {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return 0.0;
        } else {
          return T::Zero(v.rows(), v.cols()).eval();
        }
      },
      p);
}

bool payload_matches(EmissionKey key, const EmissionPayload& p) {
  switch (key) {
    case EmissionKey::ctc: return std::holds_alternative<Eigen::MatrixXd>(p);
    case EmissionKey::cty: return std::holds_alternative<Eigen::VectorXd>(p);
    case EmissionKey::yty:
    case EmissionKey::n: return std::holds_alternative<double>(p);
  }
  return false;
}

void check_key(EmissionKey key) {
  const auto k = static_cast<int>(key);
  if (k < 1 || k > 4) throw SpecError("unknown emission key " + std::to_string(k));
}

MapOutput combine(std::span<const MapOutput> outputs) {
  MapOutput out;
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<KeyedEmission> column;
    column.reserve(outputs.size());
    for (const auto& o : outputs) column.push_back(o[k]);
    out[k] = reduce_fn(column.front().key, column);
  }
  return out;
}

}  // namespace

MapOutput map_fn(const Eigen::Ref<const Eigen::MatrixXd>& C, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (C.rows() != y.size()) throw DimensionError("design and response lengths differ");
  Eigen::MatrixXd ctc = Eigen::MatrixXd::Zero(C.cols(), C.cols());
  ctc.selfadjointView<Eigen::Lower>().rankUpdate(C.transpose());
  ctc.triangularView<Eigen::StrictlyUpper>() = ctc.transpose();
  Eigen::VectorXd cty = C.transpose() * y;
  return {KeyedEmission{EmissionKey::ctc, std::move(ctc)}, KeyedEmission{EmissionKey::cty, std::move(cty)},
          KeyedEmission{EmissionKey::yty, y.squaredNorm()},
          KeyedEmission{EmissionKey::n, static_cast<double>(y.size())}};
}

MapOutput map_fn(const Partition& partition, const Design& design) {
  const auto s = design.stats(partition.rows);
  return {KeyedEmission{EmissionKey::ctc, s.ctc()}, KeyedEmission{EmissionKey::cty, s.cty()},
          KeyedEmission{EmissionKey::yty, s.yty()}, KeyedEmission{EmissionKey::n, s.n()}};
}

KeyedEmission reduce_fn(EmissionKey key, std::span<const KeyedEmission> values) {
  check_key(key);
  if (values.empty()) throw DimensionError("reduce over an empty list");
  for (const auto& v : values) {
    if (v.key != key) throw SpecError("emission under key " + std::to_string(static_cast<int>(v.key)) +
                                      " in the list for key " + std::to_string(static_cast<int>(key)));
  }
  KeyedEmission out{key, zero_like(values.front().payload)};
  if (!payload_matches(key, out.payload)) throw DimensionError("payload shape does not match its key");
  for (const auto& v : values) {
    std::visit(
        [&](auto& acc) {
          using T = std::decay_t<decltype(acc)>;
          const T* add = std::get_if<T>(&v.payload);
          if (add == nullptr) throw DimensionError("mixed payload types under one key");
          if constexpr (std::is_same_v<T, double>) {
            acc += *add;
          } else {
            if (add->rows() != acc.rows() || add->cols() != acc.cols()) throw DimensionError("payload shapes differ");
            acc += *add;
          }
        },
        out.payload);
  }
  return out;
}

SufficientStats assemble(std::span<const KeyedEmission> emissions) {
  const Eigen::MatrixXd* ctc = nullptr;
  const Eigen::VectorXd* cty = nullptr;
  std::optional<double> yty, n;
  for (const auto& e : emissions) {
    if (!payload_matches(e.key, e.payload)) throw DimensionError("payload shape does not match its key");
    switch (e.key) {
      case EmissionKey::ctc: ctc = &std::get<Eigen::MatrixXd>(e.payload); break;
      case EmissionKey::cty: cty = &std::get<Eigen::VectorXd>(e.payload); break;
      case EmissionKey::yty: yty = std::get<double>(e.payload); break;
      case EmissionKey::n: n = std::get<double>(e.payload); break;
    }
  }
  if (!ctc || !cty || !yty || !n) throw SpecError("assemble needs one emission for each of the four keys");
  return SufficientStats(*ctc, *cty, *yty, *n);
}

SufficientStats reduce_job(std::span<const Partition> partitions, const Design& design, const MapReduceConfig& cfg) {
  if (partitions.empty()) throw SpecError("no partitions");
  std::set<int> keys;
  for (const auto& p : partitions) {
    if (!keys.insert(p.key).second) throw SpecError("duplicate partition key " + std::to_string(p.key));
  }
  const std::size_t workers = cfg.workers > 0 ? cfg.workers : detail::thread_cap();
  std::vector<MapOutput> mapped(partitions.size());
  detail::parallel_for(partitions.size(), workers, [&](std::size_t i) { mapped[i] = map_fn(partitions[i], design); });

  std::vector<MapOutput> staged;
  if (cfg.combiner_stage) {
    // Worker w ran the map tasks w, w + workers, ...
    const std::size_t groups = std::min(std::max<std::size_t>(workers, 1), mapped.size());
    for (std::size_t w = 0; w < groups; ++w) {
      std::vector<MapOutput> mine;
      for (std::size_t i = w; i < mapped.size(); i += groups) mine.push_back(mapped[i]);
      staged.push_back(combine(mine));
    }
  } else {
    staged = std::move(mapped);
  }
  const MapOutput reduced = combine(staged);
  return assemble(reduced);
}

Posterior run_job(std::span<const Partition> partitions, const Design& design, const MapReduceConfig& cfg) {
  const auto stats = reduce_job(partitions, design, cfg);
  return fit(stats, design.spec(), QState::initial(design.spec()), cfg.fit);
}

std::vector<Snapshot> run_job_streaming(std::span<const Partition> partitions, const Design& design,
                                        const MapReduceConfig& cfg) {
  if (partitions.empty()) throw SpecError("no partitions");
  CombinerConfig cc;
  cc.mode = CombineMode::online;
  cc.fit = cfg.fit;
  Combiner combiner(design.spec(), cc);
  std::vector<Snapshot> snaps;
  std::int64_t tick = 0;
  for (const auto& p : partitions) {
    const auto out = map_fn(p, design);
    StreamEvent e{static_cast<std::size_t>(tick), 0, tick + 1, assemble(out)};
    ++tick;
    if (e.stats.empty()) continue;
    snaps.push_back(combiner.online_step(std::span<const StreamEvent>(&e, 1), tick));
  }
  return snaps;
}

std::vector<std::uint8_t> encode_spill(const KeyedEmission& emission) {
  check_key(emission.key);
  if (!payload_matches(emission.key, emission.payload)) throw DimensionError("payload shape does not match its key");
  std::vector<std::uint8_t> out;
  out.push_back(static_cast<std::uint8_t>(emission.key));
  switch (emission.key) {
    case EmissionKey::ctc: {
      const auto& m = std::get<Eigen::MatrixXd>(emission.payload);
      if (m.rows() != m.cols()) throw DimensionError("ctc payload must be square");
      detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = i; j < m.cols(); ++j) detail::put_f64(out, m(i, j));
      }
      break;
    }
    case EmissionKey::cty: {
      const auto& v = std::get<Eigen::VectorXd>(emission.payload);
      detail::put_u32(out, static_cast<std::uint32_t>(v.size()));
      for (Eigen::Index i = 0; i < v.size(); ++i) detail::put_f64(out, v(i));
      break;
    }
    case EmissionKey::yty:
      detail::put_u32(out, 0);
      detail::put_f64(out, std::get<double>(emission.payload));
      break;
    case EmissionKey::n: {
      const double n = std::get<double>(emission.payload);
      if (n < 0 || n != std::floor(n)) throw RangeError("sample count must be a nonnegative integer");
      detail::put_u32(out, 0);
      detail::put_u64(out, static_cast<std::uint64_t>(n));
      break;
    }
  }
  return out;
}

KeyedEmission decode_spill(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw ParseError("empty spill record");
  const auto key = static_cast<EmissionKey>(bytes[0]);
  if (bytes[0] < 1 || bytes[0] > 4) throw ParseError("unknown spill key " + std::to_string(bytes[0]));
  std::size_t offset = 1;
  const auto P = static_cast<Eigen::Index>(detail::get_u32(bytes, offset));
  KeyedEmission e{key, 0.0};
  switch (key) {
    case EmissionKey::ctc: {
      Eigen::MatrixXd m(P, P);
      for (Eigen::Index i = 0; i < P; ++i) {
        for (Eigen::Index j = i; j < P; ++j) m(i, j) = m(j, i) = detail::get_f64(bytes, offset);
      }
      e.payload = std::move(m);
      break;
    }
    case EmissionKey::cty: {
      Eigen::VectorXd v(P);
      for (Eigen::Index i = 0; i < P; ++i) v(i) = detail::get_f64(bytes, offset);
      e.payload = std::move(v);
      break;
    }
    case EmissionKey::yty: e.payload = detail::get_f64(bytes, offset); break;
    case EmissionKey::n: e.payload = static_cast<double>(detail::get_u64(bytes, offset)); break;
  }
  if (offset != bytes.size()) throw ParseError("trailing bytes after spill record");
  return e;
}

}  // namespace streamvb
