#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "streamvb/design.hpp"
#include "streamvb/mfvb.hpp"
#include "streamvb/runtime.hpp"
#include "streamvb/suffstats.hpp"

namespace streamvb {

struct Partition {
  int key = 0;
  Stream rows;
};

/// Intermediate keys of the summary-statistics job.
enum class EmissionKey : std::uint8_t { ctc = 1, cty = 2, yty = 3, n = 4 };

/// ctc carries a matrix, cty a vector, yty and n a scalar.
using EmissionPayload = std::variant<Eigen::MatrixXd, Eigen::VectorXd, double>;

struct KeyedEmission {
  EmissionKey key = EmissionKey::n;
  EmissionPayload payload;
};

using MapOutput = std::array<KeyedEmission, 4>;

MapOutput map_fn(const Eigen::Ref<const Eigen::MatrixXd>& C, const Eigen::Ref<const Eigen::VectorXd>& y);
MapOutput map_fn(const Partition& partition, const Design& design);

/// Elementwise sum under `key`. Throws SpecError for a foreign key and
/// DimensionError for mismatched shapes or an empty list.
KeyedEmission reduce_fn(EmissionKey key, std::span<const KeyedEmission> values);

/// Statistics from one emission per key (any order).
SufficientStats assemble(std::span<const KeyedEmission> emissions);

struct MapReduceConfig {
  FitConfig fit;
  /// Pre-reduce combining of each worker's map outputs.
  bool combiner_stage = false;
  /// Map workers; 0 uses the STREAMVB_THREADS cap.
  std::size_t workers = 0;
};

/// Map, optional per-worker combine, reduce; returns the pooled statistics.
SufficientStats reduce_job(std::span<const Partition> partitions, const Design& design, const MapReduceConfig& cfg = {});

/// reduce_job followed by a fit to convergence from the default state.
Posterior run_job(std::span<const Partition> partitions, const Design& design, const MapReduceConfig& cfg = {});

/// Online variant: after each map task completes (in partition order) its
/// outputs are reduced into the running statistics and one sweep runs.
std::vector<Snapshot> run_job_streaming(std::span<const Partition> partitions, const Design& design,
                                        const MapReduceConfig& cfg = {});

/// Spill format: key byte, u32 P, then the payload in the flush layout
/// (upper-triangle ctc, cty, f64 yty, or u64 n).
std::vector<std::uint8_t> encode_spill(const KeyedEmission& emission);
KeyedEmission decode_spill(std::span<const std::uint8_t> bytes);

}  // namespace streamvb
