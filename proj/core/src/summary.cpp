#include "streamvb/summary.hpp"

#include <algorithm>
#include <cmath>

#include "streamvb/error.hpp"

namespace streamvb {

CurvePoint evaluate_functional(const QState& q, const Eigen::Ref<const Eigen::VectorXd>& c, double x) {
  if (c.size() != q.mu.size()) throw DimensionError("functional length differs from the number of columns");
  CurvePoint pt;
  pt.x = x;
  pt.mean = c.dot(q.mu);
  pt.sd = std::sqrt(std::max(0.0, c.dot(q.sigma * c)));
  pt.lo95 = pt.mean - kZ95 * pt.sd;
  pt.hi95 = pt.mean + kZ95 * pt.sd;
  return pt;
}

std::vector<CoefficientRow> coefficient_table(const QState& q, const ModelSpec& spec) {
  const auto names = column_names(spec);
  std::vector<CoefficientRow> rows;
  const auto p = static_cast<Eigen::Index>(spec.p());
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sd = std::sqrt(std::max(0.0, q.sigma(j, j)));
    rows.push_back({names[static_cast<std::size_t>(j)], q.mu(j), sd, q.mu(j) - kZ95 * sd, q.mu(j) + kZ95 * sd});
  }
  return rows;
}

std::vector<CurvePoint> predictor_curve(const QState& q, const Design& design, const std::string& predictor,
                                        std::span<const double> grid, std::optional<int> group) {
  const auto& spec = design.spec();
  const auto& layout = design.layout();
  const auto P = static_cast<Eigen::Index>(layout.total);

  std::optional<Eigen::Index> linear_col;
  for (std::size_t i = 0; i < spec.linear.size(); ++i) {
    if (spec.linear[i] == predictor) linear_col = static_cast<Eigen::Index>((spec.intercept ? 1 : 0) + i);
  }
  std::vector<std::size_t> spline_blocks;
  std::optional<std::size_t> intercept_block;
  for (std::size_t l = 0; l < spec.blocks.size(); ++l) {
    const auto& b = spec.blocks[l];
    if (b.kind == BlockKind::spline && b.source == predictor) spline_blocks.push_back(l);
    if (b.kind == BlockKind::random_intercept && !intercept_block) intercept_block = l;
  }
  if (!linear_col && spline_blocks.empty()) throw RangeError("predictor '" + predictor + "' is not in the model");
  if (group) {
    if (!intercept_block) throw RangeError("model has no random intercept block");
    if (*group < 0 || static_cast<std::size_t>(*group) >= spec.blocks[*intercept_block].K) {
      throw RangeError("unknown group id " + std::to_string(*group));
    }
  }

  std::vector<CurvePoint> curve;
  curve.reserve(grid.size());
  Eigen::VectorXd c(P);
  for (double x : grid) {
    c.setZero();
    if (spec.intercept) c(0) = 1.0;
    if (linear_col) c(*linear_col) = x;
    for (std::size_t l : spline_blocks) {
      const auto& basis = design.basis(l);
      const auto& range = layout.blocks[l];
      basis.evaluate(basis.clamp(x),
                     c.segment(static_cast<Eigen::Index>(range.begin), static_cast<Eigen::Index>(range.size())));
    }
    if (group) c(static_cast<Eigen::Index>(layout.blocks[*intercept_block].begin) + *group) = 1.0;
    curve.push_back(evaluate_functional(q, c, x));
  }
  return curve;
}

std::vector<CurvePoint> row_curve(const QState& q, std::span<const Eigen::VectorXd> rows, std::span<const double> xs) {
  if (rows.size() != xs.size()) throw DimensionError("row_curve needs one x per row");
  std::vector<CurvePoint> curve;
  curve.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) curve.push_back(evaluate_functional(q, rows[i], xs[i]));
  return curve;
}

Summary summarize(const Posterior& post, const Design& design, const std::string& predictor,
                  std::span<const double> grid, std::optional<int> group) {
  Summary s;
  s.coefficients = coefficient_table(post.q, design.spec());
  s.curve = predictor_curve(post.q, design, predictor, grid, group);
  return s;
}

}  // namespace streamvb
