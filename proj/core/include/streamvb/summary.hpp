#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamvb/design.hpp"
#include "streamvb/mfvb.hpp"

namespace streamvb {

/// Normal quantile of the 95% credible sets.
inline constexpr double kZ95 = 1.959964;

struct CoefficientRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
};

struct CurvePoint {
  double x = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
};

/// mean c^T mu and sd sqrt(c^T Sigma c) of a linear functional of (beta, u).
CurvePoint evaluate_functional(const QState& q, const Eigen::Ref<const Eigen::VectorXd>& c, double x = 0.0);

/// One row per fixed effect.
std::vector<CoefficientRow> coefficient_table(const QState& q, const ModelSpec& spec);

/// Fitted curve of one predictor over a grid: the intercept, the predictor's
/// linear term and spline block, and the indicator of `group` if given. All
/// other columns are left at zero. Grid values outside a spline range are
/// clamped.
std::vector<CurvePoint> predictor_curve(const QState& q, const Design& design, const std::string& predictor,
                                        std::span<const double> grid, std::optional<int> group = {});

/// Mean and 95% band of full design rows, labelled by xs.
std::vector<CurvePoint> row_curve(const QState& q, std::span<const Eigen::VectorXd> rows, std::span<const double> xs);

struct Summary {
  std::vector<CoefficientRow> coefficients;
  std::vector<CurvePoint> curve;
};

Summary summarize(const Posterior& post, const Design& design, const std::string& predictor,
                  std::span<const double> grid, std::optional<int> group = {});

}  // namespace streamvb
