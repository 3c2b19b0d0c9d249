#include "streamvb/suffstats.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include "streamvb/error.hpp"

namespace streamvb {

namespace {

void require_same_dim(const SufficientStats& a, const SufficientStats& b, const char* op) {
  if (a.dim() != b.dim()) {
    throw DimensionError(std::string(op) + ": statistics of dimension " + std::to_string(a.dim()) +
                         " and " + std::to_string(b.dim()));
  }
}

}  // namespace

SufficientStats::SufficientStats(std::size_t P)
    : ctc_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P))),
      cty_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P))) {}

SufficientStats::SufficientStats(Eigen::MatrixXd ctc, Eigen::VectorXd cty, double yty, double n)
    : ctc_(std::move(ctc)), cty_(std::move(cty)), yty_(yty), n_(n) {
  if (ctc_.rows() != ctc_.cols() || ctc_.rows() != cty_.size()) {
    throw DimensionError("ctc must be P x P and cty of length P");
  }
  if (n_ < 0.0) throw RangeError("sample count must be nonnegative");
}

void SufficientStats::add(const Eigen::Ref<const Eigen::VectorXd>& c, double y) {
  if (c.size() != cty_.size()) {
    throw DimensionError("design row of length " + std::to_string(c.size()) + " for statistics of dimension " +
                         std::to_string(cty_.size()));
  }
  ctc_.noalias() += c * c.transpose();
  cty_.noalias() += y * c;
  yty_ += y * y;
  n_ += 1.0;
}

SufficientStats& SufficientStats::operator+=(const SufficientStats& other) {
  require_same_dim(*this, other, "merge");
  ctc_ += other.ctc_;
  cty_ += other.cty_;
  yty_ += other.yty_;
  n_ += other.n_;
  return *this;
}

SufficientStats& SufficientStats::operator-=(const SufficientStats& other) {
  require_same_dim(*this, other, "subtract");
  if (other.n_ > n_) {
    throw RangeError("subtract: removing " + std::to_string(other.n_) + " samples from " + std::to_string(n_));
  }
  ctc_ -= other.ctc_;
  cty_ -= other.cty_;
  yty_ -= other.yty_;
  n_ -= other.n_;
  if (n_ == 0.0) {
    // Exact zero state once nothing remains, so rounding residue cannot leak.
    ctc_.setZero();
    cty_.setZero();
    yty_ = 0.0;
  }
  return *this;
}

void SufficientStats::scale(double w) {
  ctc_ *= w;
  cty_ *= w;
  yty_ *= w;
}

bool SufficientStats::operator==(const SufficientStats& other) const {
  return dim() == other.dim() && n_ == other.n_ && yty_ == other.yty_ && cty_ == other.cty_ &&
         ctc_ == other.ctc_;
}

void validate(const DecayConfig& cfg) {
  if (cfg.mode == DecayConfig::Mode::decreasing) {
    if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) throw SpecError("decay tau must be > 0");
    if (!(cfg.kappa > 0.5 && cfg.kappa <= 1.0)) throw SpecError("decay kappa must lie in (0.5, 1]");
  } else if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) {
    throw SpecError("constant learning rate must lie in (0, 1)");
  }
}

double learning_rate(const DecayConfig& cfg, std::uint64_t t) {
  if (t < 1) throw RangeError("learning rate step index starts at 1");
  if (cfg.mode == DecayConfig::Mode::constant) return cfg.rho;
  return std::pow(cfg.tau + static_cast<double>(t), -cfg.kappa);
}

SufficientStats accumulate(SufficientStats stats, const Eigen::Ref<const Eigen::VectorXd>& c, double y) {
  stats.add(c, y);
  return stats;
}

SufficientStats merge(const SufficientStats& a, const SufficientStats& b) {
  SufficientStats out = a;
  out += b;
  return out;
}

SufficientStats merge_all(std::span<const SufficientStats> parts) {
  if (parts.empty()) throw DimensionError("merge_all needs at least one summary");
  SufficientStats out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out += parts[i];
  return out;
}

SufficientStats subtract(const SufficientStats& stats, const SufficientStats& old) {
  SufficientStats out = stats;
  out -= old;
  return out;
}

DecayResult decay(const SufficientStats& stats, const SufficientStats& batch, double rho) {
  require_same_dim(stats, batch, "decay");
  if (!(rho > 0.0 && rho < 1.0)) throw RangeError("decay: learning rate must lie in (0, 1)");
  if (!(batch.n() >= 1.0)) throw RangeError("decay: empty batch leaves gamma undefined");
  const double n = stats.n() + batch.n();
  SufficientStats out((1.0 - rho) * stats.ctc() + rho * batch.ctc(), (1.0 - rho) * stats.cty() + rho * batch.cty(),
                      (1.0 - rho) * stats.yty() + rho * batch.yty(), n);
  return {std::move(out), n / batch.n()};
}

namespace detail {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t& offset) {
  if (offset + 4 > in.size()) throw ParseError("truncated payload");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  offset += 4;
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& offset) {
  if (offset + 8 > in.size()) throw ParseError("truncated payload");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  offset += 8;
  return v;
}

double get_f64(std::span<const std::uint8_t> in, std::size_t& offset) {
  return std::bit_cast<double>(get_u64(in, offset));
}

}  // namespace detail

std::vector<std::uint8_t> encode(const SufficientStats& stats) {
  const std::size_t P = stats.dim();
  const double n = stats.n();
  if (n != std::floor(n)) throw RangeError("flush encoding needs an integral sample count");
  std::vector<std::uint8_t> out;
  out.reserve(4 + 8 * (flush_scalar_count(P) - 1) + 8);
  detail::put_u32(out, static_cast<std::uint32_t>(P));
  detail::put_u64(out, static_cast<std::uint64_t>(n));
  detail::put_f64(out, stats.yty());
  for (std::size_t i = 0; i < P; ++i) detail::put_f64(out, stats.cty()(static_cast<Eigen::Index>(i)));
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = i; j < P; ++j) {
      detail::put_f64(out, stats.ctc()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  return out;
}

SufficientStats decode(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  const std::size_t P = detail::get_u32(bytes, offset);
  const double n = static_cast<double>(detail::get_u64(bytes, offset));
  const double yty = detail::get_f64(bytes, offset);
  const auto dim = static_cast<Eigen::Index>(P);
  Eigen::VectorXd cty(dim);
  for (Eigen::Index i = 0; i < dim; ++i) cty(i) = detail::get_f64(bytes, offset);
  Eigen::MatrixXd ctc(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = i; j < dim; ++j) {
      ctc(i, j) = detail::get_f64(bytes, offset);
      ctc(j, i) = ctc(i, j);
    }
  }
  return SufficientStats(std::move(ctc), std::move(cty), yty, n);
}

SufficientStats decode(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  auto stats = decode(bytes, offset);
  if (offset != bytes.size()) throw ParseError("trailing bytes after statistics payload");
  return stats;
}

double relative_difference(const SufficientStats& a, const SufficientStats& b) {
  require_same_dim(a, b, "relative_difference");
  double diff = std::abs(a.yty() - b.yty());
  diff = std::max(diff, std::abs(a.n() - b.n()));
  double scale = std::max(std::abs(b.yty()), std::abs(b.n()));
  if (a.dim() > 0) {
    diff = std::max(diff, (a.cty() - b.cty()).cwiseAbs().maxCoeff());
    diff = std::max(diff, (a.ctc() - b.ctc()).cwiseAbs().maxCoeff());
    scale = std::max(scale, b.cty().cwiseAbs().maxCoeff());
    scale = std::max(scale, b.ctc().cwiseAbs().maxCoeff());
  }
  return diff / std::max(scale, std::numeric_limits<double>::min());
}

}  // namespace streamvb
