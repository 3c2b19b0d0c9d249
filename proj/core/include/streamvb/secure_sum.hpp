#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "streamvb/suffstats.hpp"

namespace streamvb {

__extension__ using u128 = unsigned __int128;
__extension__ using i128 = __int128;

/// Signed fixed point with a 2^-40 quantum, stored two's-complement in 128
/// bits. Sums of encoded values wrap modulo 2^128 and decode exactly as long
/// as the true sum fits in the signed range.
namespace fixed_point {
inline constexpr int kFractionBits = 40;

/// Rounds to the nearest quantum; throws RangeError for values that are not
/// finite or exceed 2^86 in magnitude.
u128 encode(double v);
double decode(u128 v);
}  // namespace fixed_point

/// Messages passed around the ring for integers already encoded: party 0
/// sends offset + v_0, party k forwards the running total plus v_k.
struct RingTrace {
  std::vector<u128> messages;  // one per party, in ring order
  u128 total = 0;              // last message minus the offset
};

RingTrace secure_sum_integers(std::span<const u128> values, u128 offset);

/// Uniform draw over the whole 128-bit accumulator range.
u128 draw_offset(std::uint64_t seed);

struct ScalarSumResult {
  double total = 0.0;
  std::vector<u128> messages;
};

/// Three-step ring protocol for real values; throws SpecError for B <= 2.
ScalarSumResult secure_scalar_sum_traced(std::span<const double> values, std::uint64_t seed);
double secure_scalar_sum(std::span<const double> values, std::uint64_t seed);

/// What travels between neighbouring parties: a masked running total for a
/// contiguous run of statistic entries starting at `entry_id`. It never
/// carries the offset.
struct RingMessage {
  std::uint32_t entry_id = 0;
  std::uint32_t ring_position = 0;
  std::uint32_t dim = 0;  // P of the statistics being summed
  std::vector<u128> payload;

  bool operator==(const RingMessage&) const = default;
};

/// Little-endian: u32 entry_id, u32 ring_position, u32 P, u64 count, then
/// count 16-byte words (low half first).
std::vector<std::uint8_t> encode(const RingMessage& message);
RingMessage decode_ring_message(std::span<const std::uint8_t> bytes);

/// Hop between parties. The default passes the message through its byte
/// encoding; an encrypting channel would attach here.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual RingMessage deliver(const RingMessage& message, std::size_t from, std::size_t to);
};

/// One participant. Only party 0 draws and holds an offset.
class PartyState {
 public:
  PartyState(std::size_t index, SufficientStats stats);

  std::size_t index() const { return index_; }
  const SufficientStats& stats() const { return stats_; }

  /// Party 0: draws offsets and starts the ring.
  RingMessage start(std::uint64_t seed);
  /// Parties 1..B-1: add the local encoded statistics.
  RingMessage forward(const RingMessage& incoming) const;
  /// Party 0: removes the offsets from the closing message.
  SufficientStats finish(const RingMessage& closing) const;

 private:
  std::size_t index_;
  SufficientStats stats_;
  std::optional<std::vector<u128>> offset_;
};

/// Statistics flattened in flush order: n, yty, cty, upper triangle of ctc.
std::vector<double> flatten(const SufficientStats& stats);
SufficientStats unflatten(std::size_t P, std::span<const double> values);

struct SecureMergeResult {
  SufficientStats stats;
  std::vector<RingMessage> messages;  // as received by each hop, in ring order
};

/// Entrywise ring summation over B > 2 parties sharing P.
SecureMergeResult secure_merge_traced(std::span<const SufficientStats> parties, std::uint64_t seed,
                                      Transport* transport = nullptr);
SufficientStats secure_merge(std::span<const SufficientStats> parties, std::uint64_t seed,
                             Transport* transport = nullptr);

/// Exact fixed-point fold of the same inputs without masking.
SufficientStats fixed_point_merge(std::span<const SufficientStats> parties);

}  // namespace streamvb
