#include "streamvb/spline.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "streamvb/error.hpp"

namespace streamvb {

namespace {

constexpr int kDegree = 3;
constexpr int kOrder = kDegree + 1;

// Index i of the knot span with t[i] <= x < t[i+1]; the right endpoint maps to
// the last non-empty span.
std::size_t find_span(const std::vector<double>& t, std::size_t num_basis, double x) {
  if (x >= t[num_basis]) return num_basis - 1;
  auto it = std::upper_bound(t.begin() + kDegree, t.begin() + num_basis + 1, x);
  return static_cast<std::size_t>(it - t.begin()) - 1;
}

// Nonzero basis functions and their derivatives up to order n at x, after
// Piegl & Tiller's DersBasisFuns. ders[k][j] is the k-th derivative of
// B_{span - degree + j}.
void basis_derivatives(const std::vector<double>& t, std::size_t span, double x, int n,
                       std::array<std::array<double, kOrder>, 3>& ders) {
  std::array<std::array<double, kOrder>, kOrder> ndu{};
  std::array<double, kOrder> left{}, right{};
  ndu[0][0] = 1.0;
  for (int j = 1; j <= kDegree; ++j) {
    left[j] = x - t[span + 1 - j];
    right[j] = t[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  for (int j = 0; j <= kDegree; ++j) ders[0][j] = ndu[j][kDegree];

  std::array<std::array<double, kOrder>, 2> a{};
  for (int r = 0; r <= kDegree; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= n; ++k) {
      double d = 0.0;
      const int rk = r - k;
      const int pk = kDegree - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : kDegree - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  double factor = kDegree;
  for (int k = 1; k <= n; ++k) {
    for (int j = 0; j <= kDegree; ++j) ders[k][j] *= factor;
    factor *= (kDegree - k);
  }
}

}  // namespace

std::vector<double> KnotSequence::full() const {
  std::vector<double> t;
  t.reserve(interior.size() + 2 * kOrder);
  t.insert(t.end(), kOrder, lo);
  t.insert(t.end(), interior.begin(), interior.end());
  t.insert(t.end(), kOrder, hi);
  return t;
}

KnotSequence make_knots(const KnotConfig& cfg) {
  if (!(std::isfinite(cfg.range_lo) && std::isfinite(cfg.range_hi)) || !(cfg.range_lo < cfg.range_hi)) {
    throw SpecError("degenerate knot range [" + std::to_string(cfg.range_lo) + ", " +
                    std::to_string(cfg.range_hi) + "]");
  }
  if (cfg.num_interior < 1) throw SpecError("knot configuration needs at least one interior knot");
  KnotSequence ks;
  ks.lo = cfg.range_lo;
  ks.hi = cfg.range_hi;
  const double step = (cfg.range_hi - cfg.range_lo) / static_cast<double>(cfg.num_interior + 1);
  ks.interior.reserve(cfg.num_interior);
  for (std::size_t j = 1; j <= cfg.num_interior; ++j) {
    ks.interior.push_back(cfg.range_lo + static_cast<double>(j) * step);
  }
  return ks;
}

Eigen::VectorXd bspline_basis(const KnotSequence& knots, double x, int deriv) {
  if (deriv < 0 || deriv > 2) throw RangeError("B-spline derivative order must be 0, 1 or 2");
  if (!(x >= knots.lo && x <= knots.hi)) throw RangeError("B-spline argument outside knot range");
  const auto t = knots.full();
  const std::size_t nb = knots.num_bsplines();
  const std::size_t span = find_span(t, nb, x);
  std::array<std::array<double, kOrder>, 3> ders{};
  basis_derivatives(t, span, x, deriv, ders);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nb));
  for (int j = 0; j <= kDegree; ++j) out(static_cast<Eigen::Index>(span - kDegree + j)) = ders[deriv][j];
  return out;
}

Eigen::MatrixXd second_derivative_penalty(const KnotSequence& knots) {
  // Three-point Gauss-Legendre on [-1, 1].
  static constexpr std::array<double, 3> nodes = {-0.7745966692414834, 0.0, 0.7745966692414834};
  static constexpr std::array<double, 3> weights = {0.5555555555555556, 0.8888888888888888,
                                                    0.5555555555555556};
  const auto nb = static_cast<Eigen::Index>(knots.num_bsplines());
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(nb, nb);

  std::vector<double> breaks;
  breaks.push_back(knots.lo);
  breaks.insert(breaks.end(), knots.interior.begin(), knots.interior.end());
  breaks.push_back(knots.hi);

  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double a = breaks[s], b = breaks[s + 1];
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const Eigen::VectorXd d2 = bspline_basis(knots, mid + half * nodes[q], 2);
      omega.noalias() += (half * weights[q]) * d2 * d2.transpose();
    }
  }
  return 0.5 * (omega + omega.transpose());
}

SplineBasis SplineBasis::osullivan(const KnotConfig& cfg, std::size_t K) {
  SplineBasis basis;
  basis.config_ = cfg;
  basis.knots_ = make_knots(cfg);
  basis.full_knots_ = basis.knots_.full();
  const std::size_t nb = basis.knots_.num_bsplines();
  if (K + 2 != nb) {
    throw SpecError("insufficient knots for cubic O'Sullivan basis: K = " + std::to_string(K) +
                    " needs num_interior = " + std::to_string(K >= 2 ? K - 2 : 0));
  }
  basis.penalty_ = second_derivative_penalty(basis.knots_);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(basis.penalty_);
  if (eig.info() != Eigen::Success) throw NumericalError("penalty eigendecomposition failed");

  // Ascending order from Eigen; the two smallest span the linear functions.
  const auto k = static_cast<Eigen::Index>(K);
  basis.transform_.resize(static_cast<Eigen::Index>(nb), k);
  basis.eigenvalues_.resize(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index src = static_cast<Eigen::Index>(nb) - 1 - c;
    const double d = eig.eigenvalues()(src);
    if (!(d > 0.0)) throw NumericalError("non-positive penalty eigenvalue in spline basis");
    Eigen::VectorXd u = eig.eigenvectors().col(src);
    const double tol = 1e-6 * u.cwiseAbs().maxCoeff();
    Eigen::Index lead = 0;
    while (std::abs(u(lead)) <= tol) ++lead;
    if (u(lead) < 0.0) u = -u;
    basis.eigenvalues_(c) = d;
    basis.transform_.col(c) = u / std::sqrt(d);
  }
  return basis;
}

double SplineBasis::clamp(double x) const { return std::clamp(x, knots_.lo, knots_.hi); }

void SplineBasis::evaluate(double x, Eigen::Ref<Eigen::VectorXd> out) const {
  if (!in_range(x)) throw RangeError("spline predictor value " + std::to_string(x) + " outside [" +
                                     std::to_string(knots_.lo) + ", " + std::to_string(knots_.hi) + "]");
  const std::size_t nb = knots_.num_bsplines();
  const std::size_t span = find_span(full_knots_, nb, x);
  std::array<std::array<double, kOrder>, 3> ders{};
  basis_derivatives(full_knots_, span, x, 0, ders);
  out.setZero();
  for (int j = 0; j <= kDegree; ++j) {
    out.noalias() += ders[0][j] * transform_.row(static_cast<Eigen::Index>(span - kDegree + j)).transpose();
  }
}

Eigen::VectorXd SplineBasis::evaluate(double x) const {
  Eigen::VectorXd z(transform_.cols());
  evaluate(x, z);
  return z;
}

Eigen::MatrixXd SplineBasis::evaluate(std::span<const double> xs) const {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(xs.size()), transform_.cols());
  Eigen::VectorXd row(transform_.cols());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    evaluate(xs[i], row);
    z.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return z;
}

}  // namespace streamvb
