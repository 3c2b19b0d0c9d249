#pragma once

// Brute-force O'Sullivan construction: Cox-de Boor recursion, Simpson
// quadrature of the second-derivative products and a dense eigensolver.

#include <Eigen/Dense>
#include <vector>

namespace oracle {

inline std::vector<double> clamped_knots(double lo, double hi, std::size_t num_interior) {
  std::vector<double> t(4, lo);
  for (std::size_t k = 1; k <= num_interior; ++k) {
    t.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(num_interior + 1));
  }
  t.insert(t.end(), 4, hi);
  return t;
}

inline double cox_de_boor(const std::vector<double>& t, std::size_t i, int degree, double x) {
  if (degree == 0) {
    if (t[i] <= x && x < t[i + 1]) return 1.0;
    // The right end belongs to the last non-empty interval.
    if (x == t.back() && t[i] < t[i + 1] && t[i + 1] == t.back()) return 1.0;
    return 0.0;
  }
  double out = 0.0;
  const double d1 = t[i + degree] - t[i];
  const double d2 = t[i + degree + 1] - t[i + 1];
  if (d1 > 0) out += (x - t[i]) / d1 * cox_de_boor(t, i, degree - 1, x);
  if (d2 > 0) out += (t[i + degree + 1] - x) / d2 * cox_de_boor(t, i + 1, degree - 1, x);
  return out;
}

/// Derivative of order `deriv` of the degree-`degree` B-spline i.
inline double cox_de_boor_deriv(const std::vector<double>& t, std::size_t i, int degree, int deriv, double x) {
  if (deriv == 0) return cox_de_boor(t, i, degree, x);
  double out = 0.0;
  const double d1 = t[i + degree] - t[i];
  const double d2 = t[i + degree + 1] - t[i + 1];
  if (d1 > 0) out += degree / d1 * cox_de_boor_deriv(t, i, degree - 1, deriv - 1, x);
  if (d2 > 0) out -= degree / d2 * cox_de_boor_deriv(t, i + 1, degree - 1, deriv - 1, x);
  return out;
}

inline Eigen::VectorXd raw_basis(const std::vector<double>& t, double x, int deriv = 0) {
  const std::size_t nb = t.size() - 4;
  Eigen::VectorXd b(static_cast<Eigen::Index>(nb));
  for (std::size_t i = 0; i < nb; ++i) b(static_cast<Eigen::Index>(i)) = cox_de_boor_deriv(t, i, 3, deriv, x);
  return b;
}

/// Integral of B''(x) B''(x)^T; the integrand is quadratic on each knot
/// interval, where Simpson's rule is exact. Interior points avoid the
/// one-sided ambiguity at knots.
inline Eigen::MatrixXd penalty(const std::vector<double>& t) {
  const auto nb = static_cast<Eigen::Index>(t.size() - 4);
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(nb, nb);
  for (std::size_t k = 3; k + 4 < t.size(); ++k) {
    const double a = t[k], b = t[k + 1];
    if (!(b > a)) continue;
    const double eps = (b - a) * 1e-12;
    const Eigen::VectorXd fa = raw_basis(t, a + eps, 2);
    const Eigen::VectorXd fm = raw_basis(t, 0.5 * (a + b), 2);
    const Eigen::VectorXd fb = raw_basis(t, b - eps, 2);
    omega += (b - a) / 6.0 * (fa * fa.transpose() + 4.0 * fm * fm.transpose() + fb * fb.transpose());
  }
  return omega;
}

/// Transform columns u_k / sqrt(d_k) for the K largest eigenvalues, largest
/// first, each signed so its first clearly nonzero entry is positive.
inline Eigen::MatrixXd osullivan_transform(const std::vector<double>& t, std::size_t K) {
  const Eigen::MatrixXd omega = penalty(t);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega);
  const Eigen::Index nb = omega.rows();
  Eigen::MatrixXd out(nb, static_cast<Eigen::Index>(K));
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(K); ++c) {
    Eigen::VectorXd u = eig.eigenvectors().col(nb - 1 - c);
    Eigen::Index lead = 0;
    while (std::abs(u(lead)) <= 1e-6 * u.cwiseAbs().maxCoeff()) ++lead;
    if (u(lead) < 0) u = -u;
    out.col(c) = u / std::sqrt(eig.eigenvalues()(nb - 1 - c));
  }
  return out;
}

}  // namespace oracle
