#include "streamvb/model.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "streamvb/error.hpp"

namespace streamvb {

namespace {

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

std::string block_label(const BlockSpec& b, std::size_t index) {
  std::ostringstream out;
  out << "block " << index;
  if (!b.name.empty()) out << " '" << b.name << "'";
  return out.str();
}

}  // namespace

std::size_t ModelSpec::P() const {
  std::size_t total = p();
  for (const auto& b : blocks) total += b.K;
  return total;
}

int BlockLayout::owner(std::size_t col) const {
  if (fixed.contains(col)) return -1;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    if (blocks[l].contains(col)) return static_cast<int>(l);
  }
  throw RangeError("column " + std::to_string(col) + " outside layout of " +
                   std::to_string(total) + " columns");
}

std::size_t BlockLayout::leading_columns() const {
  if (!fast_path_eligible) return total;
  return blocks.back().begin;
}

ValidationReport validate_spec(const ModelSpec& spec) {
  ValidationReport report;
  auto& v = report.violations;

  if (spec.p() < 1) v.push_back("model needs at least one fixed-effect column (p >= 1)");

  std::set<std::string> seen;
  for (const auto& name : spec.linear) {
    if (name.empty()) v.push_back("linear predictor with empty name");
    if (!seen.insert(name).second) v.push_back("duplicate linear predictor '" + name + "'");
  }

  std::size_t intercepts = 0;
  bool spline_after_intercept = false;
  for (std::size_t l = 0; l < spec.blocks.size(); ++l) {
    const auto& b = spec.blocks[l];
    const auto label = block_label(b, l);
    if (b.K == 0) v.push_back(label + ": empty block (K = 0)");
    if (b.source.empty()) v.push_back(label + ": missing source column");
    if (b.kind == BlockKind::random_intercept) {
      ++intercepts;
    } else {
      if (intercepts > 0) spline_after_intercept = true;
      const auto& k = b.knots;
      if (!(std::isfinite(k.range_lo) && std::isfinite(k.range_hi)) || !(k.range_lo < k.range_hi)) {
        v.push_back(label + ": degenerate knot range");
      }
      if (k.num_interior < 1) v.push_back(label + ": needs at least one interior knot");
      if (b.K != 0 && b.K != k.num_interior + 2) {
        v.push_back(label + ": spline K must equal num_interior + 2 (got K = " +
                    std::to_string(b.K) + ", num_interior = " + std::to_string(k.num_interior) + ")");
      }
    }
  }
  if (spline_after_intercept) v.push_back("intercept block must be last (random intercept blocks follow all spline blocks)");

  const auto& pr = spec.priors;
  if (!positive_finite(pr.sigma_beta_sq)) v.push_back("sigma_beta_sq must be positive and finite");
  if (!positive_finite(pr.A_eps)) v.push_back("A_eps must be positive and finite");
  if (pr.A_u.size() != spec.blocks.size()) {
    v.push_back("A_u has " + std::to_string(pr.A_u.size()) + " entries for " +
                std::to_string(spec.blocks.size()) + " blocks");
  }
  for (std::size_t l = 0; l < pr.A_u.size(); ++l) {
    if (!positive_finite(pr.A_u[l])) v.push_back("A_u[" + std::to_string(l) + "] must be positive and finite");
  }

  if (!report.ok()) return report;

  BlockLayout layout;
  layout.fixed = {0, spec.p()};
  std::size_t col = spec.p();
  for (const auto& b : spec.blocks) {
    layout.blocks.push_back({col, col + b.K});
    col += b.K;
  }
  layout.total = col;
  layout.fast_path_eligible =
      intercepts == 1 && spec.blocks.back().kind == BlockKind::random_intercept;
  report.dense_path_only = intercepts > 1;
  report.layout = layout;
  return report;
}

BlockLayout layout_of(const ModelSpec& spec) {
  auto report = validate_spec(spec);
  if (!report.ok()) {
    std::string msg = "invalid model spec:";
    for (const auto& s : report.violations) msg += "\n  " + s;
    throw SpecError(msg);
  }
  return *report.layout;
}

ModelSpec with_default_priors(ModelSpec spec) {
  if (spec.priors.A_u.empty()) spec.priors.A_u.assign(spec.blocks.size(), PriorHyperparams{}.A_eps);
  return spec;
}

std::vector<std::string> column_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  names.reserve(spec.P());
  if (spec.intercept) names.emplace_back("(Intercept)");
  for (const auto& n : spec.linear) names.push_back(n);
  for (std::size_t l = 0; l < spec.blocks.size(); ++l) {
    const auto& b = spec.blocks[l];
    const std::string base = b.name.empty() ? "block" + std::to_string(l) : b.name;
    for (std::size_t k = 0; k < b.K; ++k) names.push_back(base + "[" + std::to_string(k) + "]");
  }
  return names;
}

}  // namespace streamvb
