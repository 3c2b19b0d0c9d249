#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace streamvb {

/// The data summaries (C^T C, C^T y, y^T y, n) that the variational updates
/// consume. Additive across disjoint data subsets.
///
/// ctc is kept as a full symmetric matrix; only its upper triangle is
/// serialized.
class SufficientStats {
 public:
  SufficientStats() = default;
  explicit SufficientStats(std::size_t P);
  SufficientStats(Eigen::MatrixXd ctc, Eigen::VectorXd cty, double yty, double n);

  static SufficientStats zero(std::size_t P) { return SufficientStats(P); }

  std::size_t dim() const { return static_cast<std::size_t>(cty_.size()); }
  const Eigen::MatrixXd& ctc() const { return ctc_; }
  const Eigen::VectorXd& cty() const { return cty_; }
  double yty() const { return yty_; }
  double n() const { return n_; }
  bool empty() const { return n_ == 0.0; }

  /// In-place accumulate of one design row and response.
  void add(const Eigen::Ref<const Eigen::VectorXd>& c, double y);

  SufficientStats& operator+=(const SufficientStats& other);
  SufficientStats& operator-=(const SufficientStats& other);
  /// Multiplies ctc, cty and yty (not n) by `w`.
  void scale(double w);

  bool operator==(const SufficientStats& other) const;

 private:
  Eigen::MatrixXd ctc_;
  Eigen::VectorXd cty_;
  double yty_ = 0.0;
  double n_ = 0.0;
};

/// Learning rate schedule of the reweighting scheme.
struct DecayConfig {
  enum class Mode { decreasing, constant };
  Mode mode = Mode::constant;
  double tau = 1.0;
  double kappa = 1.0;
  double rho = 0.001;

  bool operator==(const DecayConfig&) const = default;
};

/// Throws SpecError unless tau > 0 and 0.5 < kappa <= 1 (decreasing) or
/// 0 < rho < 1 (constant).
void validate(const DecayConfig& cfg);

/// (tau + t)^-kappa or the constant rho, for t >= 1.
double learning_rate(const DecayConfig& cfg, std::uint64_t t);

SufficientStats accumulate(SufficientStats stats, const Eigen::Ref<const Eigen::VectorXd>& c, double y);
SufficientStats merge(const SufficientStats& a, const SufficientStats& b);
SufficientStats merge_all(std::span<const SufficientStats> parts);
/// stats - old, for removing data that left a time window.
SufficientStats subtract(const SufficientStats& stats, const SufficientStats& old);

struct DecayResult {
  SufficientStats stats;
  double gamma = 1.0;
};

/// Exponential reweighting: (1 - rho) * stats + rho * batch for ctc, cty,
/// yty, while n grows by batch.n unweighted; gamma = n / batch.n.
DecayResult decay(const SufficientStats& stats, const SufficientStats& batch, double rho);

/// Number of doubles a flush carries: P(P+1)/2 + P + 2.
constexpr std::size_t flush_scalar_count(std::size_t P) { return P * (P + 1) / 2 + P + 2; }

/// Little-endian flush encoding: u32 P, u64 n, f64 yty, P x f64 cty, then
/// the upper triangle of ctc row by row (i <= j).
std::vector<std::uint8_t> encode(const SufficientStats& stats);
SufficientStats decode(std::span<const std::uint8_t> bytes);
/// Decodes a payload starting at `offset`; advances `offset` past it.
SufficientStats decode(std::span<const std::uint8_t> bytes, std::size_t& offset);

/// Relative difference max|a - b| / max(max|b|, tiny) over all fields.
double relative_difference(const SufficientStats& a, const SufficientStats& b);

namespace detail {
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t& offset);
std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& offset);
double get_f64(std::span<const std::uint8_t> in, std::size_t& offset);
}  // namespace detail

}  // namespace streamvb
