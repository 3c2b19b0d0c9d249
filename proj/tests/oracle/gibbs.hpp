#pragma once

// Gibbs sampler for the Gaussian mixed model with Half-Cauchy scales written
// as two Inverse-Gamma layers, working on the raw design and response:
//   (beta, u) | rest  ~ N(Q^-1 C^T y / s2e, Q^-1),
//     Q = C^T C / s2e + blockdiag(I / sigma_beta^2, I / s2u_1, ...)
//   s2e | rest   ~ IG((n + 1) / 2, 1 / ae + |y - C nu|^2 / 2)
//   ae | rest    ~ IG(1, 1 / s2e + 1 / A_eps^2)
//   s2u_l | rest ~ IG((K_l + 1) / 2, 1 / au_l + |u_l|^2 / 2)
//   au_l | rest  ~ IG(1, 1 / s2u_l + 1 / A_u^2)

#include <Eigen/Dense>
#include <random>
#include <vector>

namespace oracle {

struct GibbsResult {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

inline double draw_inverse_gamma(std::mt19937_64& rng, double shape, double rate) {
  std::gamma_distribution<double> g(shape, 1.0);
  return rate / g(rng);
}

inline GibbsResult gibbs(const Eigen::MatrixXd& C, const Eigen::VectorXd& y, std::size_t p,
                         const std::vector<std::size_t>& K, double sigma_beta_sq, double A_eps,
                         const std::vector<double>& A_u, std::size_t draws, std::size_t burn_in,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const Eigen::Index P = C.cols();
  const double n = static_cast<double>(C.rows());
  const Eigen::MatrixXd ctc = C.transpose() * C;
  const Eigen::VectorXd cty = C.transpose() * y;

  double s2e = 1.0, ae = 1.0;
  std::vector<double> s2u(K.size(), 1.0), au(K.size(), 1.0);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(P), sumsq = Eigen::VectorXd::Zero(P);
  Eigen::VectorXd nu(P), noise(P);

  for (std::size_t it = 0; it < burn_in + draws; ++it) {
    Eigen::VectorXd prior(P);
    prior.head(static_cast<Eigen::Index>(p)).setConstant(1.0 / sigma_beta_sq);
    Eigen::Index off = static_cast<Eigen::Index>(p);
    for (std::size_t l = 0; l < K.size(); ++l) {
      prior.segment(off, static_cast<Eigen::Index>(K[l])).setConstant(1.0 / s2u[l]);
      off += static_cast<Eigen::Index>(K[l]);
    }
    Eigen::MatrixXd Q = ctc / s2e;
    Q.diagonal() += prior;
    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    const Eigen::VectorXd m = llt.solve(cty / s2e);
    for (Eigen::Index j = 0; j < P; ++j) noise(j) = z(rng);
    nu = m + llt.matrixU().solve(noise);

    const double rss = (y - C * nu).squaredNorm();
    s2e = draw_inverse_gamma(rng, 0.5 * (n + 1.0), 1.0 / ae + 0.5 * rss);
    ae = draw_inverse_gamma(rng, 1.0, 1.0 / s2e + 1.0 / (A_eps * A_eps));
    off = static_cast<Eigen::Index>(p);
    for (std::size_t l = 0; l < K.size(); ++l) {
      const auto k = static_cast<Eigen::Index>(K[l]);
      const double uu = nu.segment(off, k).squaredNorm();
      s2u[l] = draw_inverse_gamma(rng, 0.5 * (static_cast<double>(k) + 1.0), 1.0 / au[l] + 0.5 * uu);
      au[l] = draw_inverse_gamma(rng, 1.0, 1.0 / s2u[l] + 1.0 / (A_u[l] * A_u[l]));
      off += k;
    }
    if (it >= burn_in) {
      sum += nu;
      sumsq += nu.cwiseProduct(nu);
    }
  }
  GibbsResult r;
  const double d = static_cast<double>(draws);
  r.mean = sum / d;
  r.sd = (sumsq / d - r.mean.cwiseProduct(r.mean)).cwiseMax(0.0).cwiseSqrt();
  return r;
}

}  // namespace oracle
