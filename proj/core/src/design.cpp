#include "streamvb/design.hpp"

#include <algorithm>
#include <cmath>

#include "streamvb/error.hpp"

namespace streamvb {

namespace {

std::size_t slot_of(std::vector<std::string>& names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
  names.push_back(name);
  return names.size() - 1;
}

}  // namespace

Design::Design(ModelSpec spec) : spec_(std::move(spec)), layout_(layout_of(spec_)) {
  for (const auto& name : spec_.linear) linear_slot_.push_back(slot_of(predictors_, name));
  for (const auto& b : spec_.blocks) {
    if (b.kind == BlockKind::spline) {
      block_slot_.push_back(slot_of(predictors_, b.source));
      bases_.emplace_back(SplineBasis::osullivan(b.knots, b.K));
    } else {
      group_columns_.push_back(b.source);
      block_slot_.push_back(group_columns_.size() - 1);
      bases_.emplace_back(std::nullopt);
    }
  }
}

const SplineBasis& Design::basis(std::size_t l) const {
  if (l >= bases_.size() || !bases_[l]) throw RangeError("block " + std::to_string(l) + " has no spline basis");
  return *bases_[l];
}

Binding Design::bind(const std::vector<std::string>& predictors, const std::vector<std::string>& groups) const {
  Binding binding;
  for (const auto& name : predictors_) {
    auto it = std::find(predictors.begin(), predictors.end(), name);
    if (it == predictors.end()) throw RangeError("missing predictor '" + name + "'");
    binding.predictor_index.push_back(static_cast<std::size_t>(it - predictors.begin()));
  }
  for (const auto& name : group_columns_) {
    auto it = std::find(groups.begin(), groups.end(), name);
    if (it == groups.end()) throw RangeError("missing group column '" + name + "'");
    binding.group_index.push_back(static_cast<std::size_t>(it - groups.begin()));
  }
  return binding;
}

void Design::fill_from_values(std::span<const double> values, std::span<const int> groups,
                              Eigen::Ref<Eigen::VectorXd> c) const {
  if (static_cast<std::size_t>(c.size()) != layout_.total) throw DimensionError("design row buffer has wrong length");
  Eigen::Index col = 0;
  if (spec_.intercept) c(col++) = 1.0;
  for (std::size_t slot : linear_slot_) c(col++) = values[slot];

  for (std::size_t l = 0; l < spec_.blocks.size(); ++l) {
    const auto& b = spec_.blocks[l];
    const auto range = layout_.blocks[l];
    auto segment = c.segment(static_cast<Eigen::Index>(range.begin), static_cast<Eigen::Index>(range.size()));
    if (b.kind == BlockKind::spline) {
      const auto& basis = *bases_[l];
      double x = values[block_slot_[l]];
      if (!std::isfinite(x)) throw RangeError("non-finite value for spline predictor '" + b.source + "'");
      if (!basis.in_range(x)) {
        if (b.out_of_range == OutOfRangePolicy::error) {
          throw RangeError("predictor '" + b.source + "' = " + std::to_string(x) + " outside [" +
                           std::to_string(b.knots.range_lo) + ", " + std::to_string(b.knots.range_hi) + "]");
        }
        x = basis.clamp(x);
      }
      basis.evaluate(x, segment);
    } else {
      const int g = groups[block_slot_[l]];
      if (g < 0 || static_cast<std::size_t>(g) >= b.K) {
        throw RangeError("unknown group id " + std::to_string(g) + " for block '" + b.name + "' with " +
                         std::to_string(b.K) + " groups");
      }
      segment.setZero();
      segment(g) = 1.0;
    }
  }
}

void Design::fill_row(const Binding& binding, const Record& record, Eigen::Ref<Eigen::VectorXd> c) const {
  // Gather into design order; small fixed-size work per row.
  thread_local std::vector<double> values;
  thread_local std::vector<int> groups;
  values.resize(predictors_.size());
  groups.resize(group_columns_.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t src = binding.predictor_index[i];
    if (src >= record.x.size()) throw DimensionError("record has too few predictor values");
    values[i] = record.x[src];
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::size_t src = binding.group_index[i];
    if (src >= record.groups.size()) throw DimensionError("record has too few group ids");
    groups[i] = record.groups[src];
  }
  fill_from_values(values, groups, c);
}

Eigen::VectorXd Design::row(const Binding& binding, const Record& record) const {
  Eigen::VectorXd c(static_cast<Eigen::Index>(layout_.total));
  fill_row(binding, record, c);
  return c;
}

Eigen::VectorXd Design::row(const std::map<std::string, double>& values, std::span<const int> groups) const {
  std::vector<double> ordered;
  ordered.reserve(predictors_.size());
  for (const auto& name : predictors_) {
    auto it = values.find(name);
    if (it == values.end()) throw RangeError("missing predictor '" + name + "'");
    ordered.push_back(it->second);
  }
  if (groups.size() != group_columns_.size()) {
    throw RangeError("expected " + std::to_string(group_columns_.size()) + " group ids, got " +
                     std::to_string(groups.size()));
  }
  Eigen::VectorXd c(static_cast<Eigen::Index>(layout_.total));
  fill_from_values(ordered, groups, c);
  return c;
}

Eigen::VectorXd Design::row(const std::map<std::string, double>& values, std::optional<int> group) const {
  if (group) {
    const int g = *group;
    return row(values, std::span<const int>(&g, 1));
  }
  return row(values, std::span<const int>{});
}

Eigen::MatrixXd Design::matrix(const Stream& stream) const {
  const auto binding = bind(stream);
  Eigen::MatrixXd C(static_cast<Eigen::Index>(stream.size()), static_cast<Eigen::Index>(layout_.total));
  Eigen::VectorXd c(static_cast<Eigen::Index>(layout_.total));
  for (std::size_t i = 0; i < stream.size(); ++i) {
    fill_row(binding, stream.records[i], c);
    C.row(static_cast<Eigen::Index>(i)) = c.transpose();
  }
  return C;
}

SufficientStats Design::stats(const Stream& stream, std::size_t begin, std::size_t end) const {
  if (begin > end || end > stream.size()) throw RangeError("record range outside stream");
  SufficientStats s(layout_.total);
  if (begin == end) return s;
  const auto binding = bind(stream);
  Eigen::VectorXd c(static_cast<Eigen::Index>(layout_.total));
  for (std::size_t i = begin; i < end; ++i) {
    fill_row(binding, stream.records[i], c);
    s.add(c, stream.records[i].y);
  }
  return s;
}

}  // namespace streamvb
