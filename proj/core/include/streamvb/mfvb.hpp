#pragma once

#include <Eigen/Dense>
#include <vector>

#include "streamvb/model.hpp"
#include "streamvb/suffstats.hpp"

namespace streamvb {

/// Variational parameters of q(beta, u) q(a) q(sigma^2).
///
/// The Inverse-Gamma rate parameters are not stored; they follow from the
/// means of the reciprocals, e.g. B_q(sigma_eps^2) = (n + 1) / (2 mu_inv_sigeps)
/// and B_q(a_eps) = 1 / mu_inv_aeps.
struct QState {
  Eigen::VectorXd mu;        // mu_q(beta,u)
  Eigen::MatrixXd sigma;     // Sigma_q(beta,u)
  double mu_inv_sigeps = 1.0;
  double mu_inv_aeps = 1.0;
  Eigen::VectorXd mu_inv_sigu;  // one per block
  Eigen::VectorXd mu_inv_au;    // one per block
  /// log|Sigma|, cached from the factorization that produced `sigma`.
  double log_det_sigma = 0.0;

  /// Default starting point: mu = 0, Sigma = I, all reciprocal means 1.
  static QState initial(const ModelSpec& spec);
};

enum class CovariancePath { dense, block_fast, automatic };

struct FitConfig {
  /// Stop once |L_k - L_{k-1}| / |L_{k-1}| < rel_tol.
  double rel_tol = 1e-8;
  int max_iter = 500;
  CovariancePath covariance_path = CovariancePath::automatic;
  /// Optional second stop condition on the largest relative change of mu and
  /// the reciprocal means between sweeps; 0 disables it.
  double param_tol = 0.0;

  bool operator==(const FitConfig&) const = default;
};

struct Posterior {
  QState q;
  std::vector<double> trace;  // lower bound after every sweep
  int iterations = 0;
  bool converged = false;
};

struct Covariance {
  Eigen::MatrixXd sigma;
  double log_det = 0.0;
};

/// Sigma_q = [mu_inv_sigeps * gamma * C^T C + blockdiag(G)]^-1 through a
/// Cholesky factorization of the precision matrix.
Covariance sigma_dense(const SufficientStats& stats, const QState& state, const ModelSpec& spec,
                       double gamma = 1.0);

/// Same matrix through the block partition [X Z_1 | Z_2] with a trailing
/// random intercept block Z_2, whose cross-product Z_2^T Z_2 is diagonal.
/// Only the Schur complement of the diagonal block is factorized; the
/// intercept-by-intercept block is filled entry by entry.
Covariance sigma_block_fast(const SufficientStats& stats, const QState& state, const ModelSpec& spec,
                            double gamma = 1.0);

/// Resolves `automatic` to block_fast when the layout allows it.
CovariancePath resolve_path(const ModelSpec& spec, CovariancePath requested);

/// One coordinate-ascent sweep. With gamma != 1 the data terms are scaled as
/// in the reweighted (decaying-window) updates: gamma C^T C in Sigma,
/// gamma C^T y in mu and gamma times the expected residual sum of squares in
/// the error-precision update.
QState update_q(const SufficientStats& stats, const QState& state, const ModelSpec& spec,
                CovariancePath path = CovariancePath::automatic, double gamma = 1.0);

/// log p(y; q) at a state produced by update_q, with the rate parameters
/// derived from the stored reciprocal means.
double lower_bound(const SufficientStats& stats, const QState& state, const ModelSpec& spec, double gamma = 1.0);

/// Iterates update_q from `init` until the relative lower-bound change drops
/// below cfg.rel_tol (and the optional parameter change below cfg.param_tol)
/// or cfg.max_iter sweeps have run.
Posterior fit(const SufficientStats& stats, const ModelSpec& spec, const QState& init, const FitConfig& cfg = {},
              double gamma = 1.0);

/// Largest relative change between two states' mu and reciprocal means.
double parameter_change(const QState& a, const QState& b);

}  // namespace streamvb
