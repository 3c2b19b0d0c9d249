#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "streamvb/model.hpp"

namespace streamvb {

/// Boundary knots plus equidistant interior knots.
struct KnotSequence {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> interior;

  /// Clamped cubic knot vector: lo four times, interior, hi four times.
  std::vector<double> full() const;
  std::size_t num_bsplines() const { return interior.size() + 4; }
};

/// Interior knots placed equidistantly on (range_lo, range_hi), endpoints
/// excluded. Throws SpecError on a degenerate range or zero interior knots.
KnotSequence make_knots(const KnotConfig& cfg);

/// Values (deriv = 0), first or second derivatives (deriv = 1, 2) of every
/// cubic B-spline on `knots` at x in [lo, hi].
Eigen::VectorXd bspline_basis(const KnotSequence& knots, double x, int deriv = 0);

/// Gram matrix of B-spline second derivatives over [lo, hi], by Gauss-Legendre
/// quadrature on every inter-knot interval (exact for cubic splines).
Eigen::MatrixXd second_derivative_penalty(const KnotSequence& knots);

/// O'Sullivan penalized spline basis in mixed-model form.
///
/// The penalty Omega = int B''(x) B''(x)^T dx has a two-dimensional null space
/// (the linear functions, carried by X). Its remaining eigenpairs (d_k, u_k)
/// give the columns z_k(x) = B(x)^T u_k / sqrt(d_k), ordered by decreasing
/// d_k, so that a ridge penalty on the coefficients of Z reproduces the
/// roughness penalty. Eigenvectors are sign-normalized so that their first
/// entry above 1e-6 of the largest magnitude is positive, which makes the basis a pure function of the
/// knot configuration.
class SplineBasis {
 public:
  static SplineBasis osullivan(const KnotConfig& cfg, std::size_t K);

  std::size_t K() const { return static_cast<std::size_t>(transform_.cols()); }
  const KnotSequence& knots() const { return knots_; }
  const KnotConfig& config() const { return config_; }
  /// Raw B-spline coefficients -> standardized basis, (K + 2) x K.
  const Eigen::MatrixXd& transform() const { return transform_; }
  const Eigen::MatrixXd& penalty() const { return penalty_; }
  /// Retained penalty eigenvalues, decreasing.
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

  bool in_range(double x) const { return x >= knots_.lo && x <= knots_.hi; }
  double clamp(double x) const;

  /// Writes z_1(x), ..., z_K(x) into `out`. x must lie in range.
  void evaluate(double x, Eigen::Ref<Eigen::VectorXd> out) const;
  Eigen::VectorXd evaluate(double x) const;
  /// One row per x.
  Eigen::MatrixXd evaluate(std::span<const double> xs) const;

 private:
  KnotConfig config_;
  KnotSequence knots_;
  std::vector<double> full_knots_;
  Eigen::MatrixXd penalty_;
  Eigen::MatrixXd transform_;
  Eigen::VectorXd eigenvalues_;
};

}  // namespace streamvb
