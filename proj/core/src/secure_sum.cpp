#include "streamvb/secure_sum.hpp"

#include <cmath>
#include <random>
#include <string>

#include "streamvb/error.hpp"

namespace streamvb {

namespace fixed_point {

u128 encode(double v) {
  if (!std::isfinite(v)) throw RangeError("cannot encode a non-finite value");
  const double scaled = std::nearbyint(std::ldexp(v, kFractionBits));
  if (std::fabs(scaled) >= std::ldexp(1.0, 126)) throw RangeError("value out of fixed-point range");
  return static_cast<u128>(static_cast<i128>(scaled));
}

double decode(u128 v) { return std::ldexp(static_cast<double>(static_cast<i128>(v)), -kFractionBits); }

}  // namespace fixed_point

namespace {

void require_parties(std::size_t B) {
  if (B <= 2) throw SpecError("secure summation needs more than two parties, got " + std::to_string(B));
}

u128 random_u128(std::mt19937_64& rng) {
  const u128 hi = rng();
  return (hi << 64) | static_cast<u128>(rng());
}

}  // namespace

RingTrace secure_sum_integers(std::span<const u128> values, u128 offset) {
  RingTrace trace;
  u128 running = offset;
  for (u128 v : values) {
    running += v;
    trace.messages.push_back(running);
  }
  trace.total = running - offset;
  return trace;
}

u128 draw_offset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_u128(rng);
}

ScalarSumResult secure_scalar_sum_traced(std::span<const double> values, std::uint64_t seed) {
  require_parties(values.size());
  std::vector<u128> encoded;
  encoded.reserve(values.size());
  for (double v : values) encoded.push_back(fixed_point::encode(v));
  auto trace = secure_sum_integers(encoded, draw_offset(seed));
  return {fixed_point::decode(trace.total), std::move(trace.messages)};
}

double secure_scalar_sum(std::span<const double> values, std::uint64_t seed) {
  return secure_scalar_sum_traced(values, seed).total;
}

std::vector<std::uint8_t> encode(const RingMessage& message) {
  std::vector<std::uint8_t> out;
  out.reserve(20 + 16 * message.payload.size());
  detail::put_u32(out, message.entry_id);
  detail::put_u32(out, message.ring_position);
  detail::put_u32(out, message.dim);
  detail::put_u64(out, message.payload.size());
  for (u128 w : message.payload) {
    detail::put_u64(out, static_cast<std::uint64_t>(w));
    detail::put_u64(out, static_cast<std::uint64_t>(w >> 64));
  }
  return out;
}

RingMessage decode_ring_message(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  RingMessage m;
  m.entry_id = detail::get_u32(bytes, offset);
  m.ring_position = detail::get_u32(bytes, offset);
  m.dim = detail::get_u32(bytes, offset);
  const std::uint64_t count = detail::get_u64(bytes, offset);
  if (count > (bytes.size() - offset) / 16) throw ParseError("ring message truncated");
  m.payload.resize(count);
  for (auto& w : m.payload) {
    const u128 lo = detail::get_u64(bytes, offset);
    const u128 hi = detail::get_u64(bytes, offset);
    w = (hi << 64) | lo;
  }
  if (offset != bytes.size()) throw ParseError("trailing bytes after ring message");
  return m;
}

RingMessage Transport::deliver(const RingMessage& message, std::size_t, std::size_t) {
  return decode_ring_message(encode(message));
}

std::vector<double> flatten(const SufficientStats& stats) {
  const std::size_t P = stats.dim();
  std::vector<double> out;
  out.reserve(flush_scalar_count(P));
  out.push_back(stats.n());
  out.push_back(stats.yty());
  for (std::size_t i = 0; i < P; ++i) out.push_back(stats.cty()(static_cast<Eigen::Index>(i)));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(P); ++i) {
    for (Eigen::Index j = i; j < static_cast<Eigen::Index>(P); ++j) out.push_back(stats.ctc()(i, j));
  }
  return out;
}

SufficientStats unflatten(std::size_t P, std::span<const double> values) {
  if (values.size() != flush_scalar_count(P)) throw DimensionError("flattened statistics have the wrong length");
  const auto n = static_cast<Eigen::Index>(P);
  Eigen::VectorXd cty(n);
  Eigen::MatrixXd ctc(n, n);
  std::size_t k = 2;
  for (Eigen::Index i = 0; i < n; ++i) cty(i) = values[k++];
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) ctc(i, j) = ctc(j, i) = values[k++];
  }
  return SufficientStats(std::move(ctc), std::move(cty), values[1], values[0]);
}

namespace {

std::vector<u128> encode_all(const SufficientStats& stats) {
  const auto flat = flatten(stats);
  std::vector<u128> out(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) out[i] = fixed_point::encode(flat[i]);
  return out;
}

SufficientStats decode_all(std::size_t P, const std::vector<u128>& words) {
  std::vector<double> flat(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) flat[i] = fixed_point::decode(words[i]);
  return unflatten(P, flat);
}

}  // namespace

PartyState::PartyState(std::size_t index, SufficientStats stats) : index_(index), stats_(std::move(stats)) {}

RingMessage PartyState::start(std::uint64_t seed) {
  if (index_ != 0) throw SpecError("only party 0 starts the ring");
  std::mt19937_64 rng(seed);
  auto words = encode_all(stats_);
  offset_.emplace(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    (*offset_)[i] = random_u128(rng);
    words[i] += (*offset_)[i];
  }
  return RingMessage{0, 0, static_cast<std::uint32_t>(stats_.dim()), std::move(words)};
}

RingMessage PartyState::forward(const RingMessage& incoming) const {
  if (index_ == 0) throw SpecError("party 0 does not forward");
  if (incoming.dim != stats_.dim()) throw DimensionError("party " + std::to_string(index_) + " holds statistics of a different dimension");
  const auto words = encode_all(stats_);
  if (incoming.payload.size() != words.size()) throw DimensionError("ring message has the wrong length");
  RingMessage out = incoming;
  out.ring_position = static_cast<std::uint32_t>(index_);
  for (std::size_t i = 0; i < words.size(); ++i) out.payload[i] += words[i];
  return out;
}

SufficientStats PartyState::finish(const RingMessage& closing) const {
  if (!offset_) throw SpecError("party " + std::to_string(index_) + " holds no offset");
  if (closing.payload.size() != offset_->size()) throw DimensionError("ring message has the wrong length");
  std::vector<u128> words = closing.payload;
  for (std::size_t i = 0; i < words.size(); ++i) words[i] -= (*offset_)[i];
  return decode_all(stats_.dim(), words);
}

SecureMergeResult secure_merge_traced(std::span<const SufficientStats> parties, std::uint64_t seed,
                                      Transport* transport) {
  require_parties(parties.size());
  Transport fallback;
  Transport& channel = transport ? *transport : fallback;
  std::vector<PartyState> ring;
  ring.reserve(parties.size());
  for (std::size_t i = 0; i < parties.size(); ++i) {
    if (parties[i].dim() != parties[0].dim()) throw DimensionError("all parties must share P");
    ring.emplace_back(i, parties[i]);
  }
  SecureMergeResult result;
  RingMessage message = ring[0].start(seed);
  for (std::size_t i = 1; i < ring.size(); ++i) {
    message = channel.deliver(message, i - 1, i);
    result.messages.push_back(message);
    message = ring[i].forward(message);
  }
  message = channel.deliver(message, ring.size() - 1, 0);
  result.messages.push_back(message);
  result.stats = ring[0].finish(message);
  return result;
}

SufficientStats secure_merge(std::span<const SufficientStats> parties, std::uint64_t seed, Transport* transport) {
  return secure_merge_traced(parties, seed, transport).stats;
}

SufficientStats fixed_point_merge(std::span<const SufficientStats> parties) {
  if (parties.empty()) throw SpecError("nothing to merge");
  std::vector<u128> total(flush_scalar_count(parties[0].dim()), 0);
  for (const auto& p : parties) {
    if (p.dim() != parties[0].dim()) throw DimensionError("all parties must share P");
    const auto words = encode_all(p);
    for (std::size_t i = 0; i < words.size(); ++i) total[i] += words[i];
  }
  return decode_all(parties[0].dim(), total);
}

}  // namespace streamvb
