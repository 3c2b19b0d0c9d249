#include "streamvb/mfvb.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "parallel.hpp"
#include "streamvb/error.hpp"

namespace streamvb {

namespace {

void require_dims(const SufficientStats& stats, const QState& state, const BlockLayout& layout) {
  const auto P = static_cast<Eigen::Index>(layout.total);
  if (static_cast<Eigen::Index>(stats.dim()) != P) {
    throw DimensionError("statistics of dimension " + std::to_string(stats.dim()) + " for a model with " +
                         std::to_string(layout.total) + " columns");
  }
  if (state.mu_inv_sigu.size() != static_cast<Eigen::Index>(layout.blocks.size()) ||
      state.mu_inv_au.size() != static_cast<Eigen::Index>(layout.blocks.size())) {
    throw DimensionError("variational state has the wrong number of blocks");
  }
  if (!(state.mu_inv_sigeps > 0.0) || (state.mu_inv_sigu.size() > 0 && !(state.mu_inv_sigu.array() > 0.0).all())) {
    throw NumericalError("variational state has non-positive precision means");
  }
}

// Diagonal of blockdiag(sigma_beta^-2 I_p, mu_q(1/sigma_u1^2) I_K1, ...).
Eigen::VectorXd prior_precision(const ModelSpec& spec, const BlockLayout& layout, const QState& state) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(layout.total));
  g.head(static_cast<Eigen::Index>(layout.fixed.size())).setConstant(1.0 / spec.priors.sigma_beta_sq);
  for (std::size_t l = 0; l < layout.blocks.size(); ++l) {
    const auto& range = layout.blocks[l];
    g.segment(static_cast<Eigen::Index>(range.begin), static_cast<Eigen::Index>(range.size()))
        .setConstant(state.mu_inv_sigu(static_cast<Eigen::Index>(l)));
  }
  return g;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    std::ostringstream out;
    out << "variational update produced non-finite " << what << " (" << v << ")";
    throw NumericalError(out.str());
  }
}

}  // namespace

QState QState::initial(const ModelSpec& spec) {
  const auto P = static_cast<Eigen::Index>(spec.P());
  const auto r = static_cast<Eigen::Index>(spec.r());
  QState q;
  q.mu = Eigen::VectorXd::Zero(P);
  q.sigma = Eigen::MatrixXd::Identity(P, P);
  q.mu_inv_sigu = Eigen::VectorXd::Ones(r);
  q.mu_inv_au = Eigen::VectorXd::Ones(r);
  return q;
}

Covariance sigma_dense(const SufficientStats& stats, const QState& state, const ModelSpec& spec, double gamma) {
  const auto layout = layout_of(spec);
  require_dims(stats, state, layout);
  const auto P = static_cast<Eigen::Index>(layout.total);

  Eigen::MatrixXd precision = (state.mu_inv_sigeps * gamma) * stats.ctc();
  precision.diagonal() += prior_precision(spec, layout, state);

  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("precision matrix is not positive definite");

  Covariance out;
  out.sigma = llt.solve(Eigen::MatrixXd::Identity(P, P));
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose());
  out.log_det = -2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return out;
}

Covariance sigma_block_fast(const SufficientStats& stats, const QState& state, const ModelSpec& spec, double gamma) {
  const auto layout = layout_of(spec);
  if (!layout.fast_path_eligible) {
    throw SpecError("block covariance path needs a single trailing random intercept block");
  }
  require_dims(stats, state, layout);

  const auto P = static_cast<Eigen::Index>(layout.total);
  const auto q = static_cast<Eigen::Index>(layout.leading_columns());
  const Eigen::Index groups = P - q;
  const auto& ctc = stats.ctc();

  for (Eigen::Index j = q; j < P; ++j) {
    for (Eigen::Index i = q; i < j; ++i) {
      if (ctc(i, j) != 0.0) throw SpecError("Z2^T Z2 is not diagonal: random intercept indicators overlap");
    }
  }

  // Precision = mu_eps * [M11 M12; M21 M22] with the prior precisions divided
  // by mu_eps. M22 = diag(d_i), d_i = gamma n_i + mu_q(1/sigma_ur^2) / mu_eps.
  const double me = state.mu_inv_sigeps;
  const Eigen::VectorXd g = prior_precision(spec, layout, state);

  Eigen::MatrixXd m11 = gamma * ctc.topLeftCorner(q, q);
  m11.diagonal() += g.head(q) / me;
  const Eigen::MatrixXd h = gamma * ctc.topRightCorner(q, groups);  // columns h_i
  const Eigen::VectorXd d = (gamma * ctc.diagonal().tail(groups)).array() + g.tail(groups).array() / me;
  const Eigen::VectorXd d_inv = d.cwiseInverse();

  // M^11 = (M11 - M12 M22^-1 M21)^-1
  Eigen::MatrixXd schur = m11;
  schur.noalias() -= h * d_inv.asDiagonal() * h.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(schur);
  if (llt.info() != Eigen::Success) throw NumericalError("Schur complement is not positive definite");
  Eigen::MatrixXd m11_inv = llt.solve(Eigen::MatrixXd::Identity(q, q));
  m11_inv = 0.5 * (m11_inv + m11_inv.transpose());

  // W = M^11 h, so h_i^T M^11 h_j = h_i . W_j and M^12 = -W M22^-1.
  const Eigen::MatrixXd w = m11_inv * h;

  Covariance out;
  out.sigma.resize(P, P);
  out.sigma.topLeftCorner(q, q) = m11_inv;
  const Eigen::MatrixXd m12 = -w * d_inv.asDiagonal();
  out.sigma.topRightCorner(q, groups) = m12;
  out.sigma.bottomLeftCorner(groups, q) = m12.transpose();

  // Unique entries of M^22:
  //   M22_ii = (1/d_i) (1 + h_i^T M^11 h_i / d_i)
  //   M22_ij = h_i^T M^11 h_j / (d_i d_j)
  auto m22 = out.sigma.bottomRightCorner(groups, groups);
  detail::parallel_for(static_cast<std::size_t>(groups), detail::thread_cap(), [&](std::size_t ui) {
    const auto i = static_cast<Eigen::Index>(ui);
    m22(i, i) = d_inv(i) * (1.0 + h.col(i).dot(w.col(i)) * d_inv(i));
    for (Eigen::Index j = i + 1; j < groups; ++j) {
      const double v = h.col(i).dot(w.col(j)) * d_inv(i) * d_inv(j);
      m22(i, j) = v;
      m22(j, i) = v;
    }
  });

  out.sigma /= me;
  // log|Sigma| = -P log mu_eps - log|M22| - log|Schur|
  const double log_det_schur = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  out.log_det = -static_cast<double>(P) * std::log(me) - d.array().log().sum() - log_det_schur;
  return out;
}

CovariancePath resolve_path(const ModelSpec& spec, CovariancePath requested) {
  if (requested != CovariancePath::automatic) return requested;
  return layout_of(spec).fast_path_eligible ? CovariancePath::block_fast : CovariancePath::dense;
}

QState update_q(const SufficientStats& stats, const QState& state, const ModelSpec& spec, CovariancePath path,
                double gamma) {
  const auto layout = layout_of(spec);
  require_dims(stats, state, layout);
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw RangeError("gamma must be positive and finite");

  auto cov = resolve_path(spec, path) == CovariancePath::block_fast ? sigma_block_fast(stats, state, spec, gamma)
                                                                     : sigma_dense(stats, state, spec, gamma);
  QState next;
  next.sigma = std::move(cov.sigma);
  next.log_det_sigma = cov.log_det;
  next.mu = (state.mu_inv_sigeps * gamma) * (next.sigma * stats.cty());
  next.mu_inv_aeps = 1.0 / (state.mu_inv_sigeps + 1.0 / (spec.priors.A_eps * spec.priors.A_eps));

  // E_q ||y - C nu||^2 = y^T y - 2 mu^T C^T y + tr[C^T C (Sigma + mu mu^T)]
  // The quadratic part is |y - C mu|^2 >= 0; clamp the cancellation error of
  // near-exact fits.
  const double quadratic = stats.yty() - 2.0 * next.mu.dot(stats.cty()) + next.mu.dot(stats.ctc() * next.mu);
  const double residual = std::max(quadratic, 0.0) + stats.ctc().cwiseProduct(next.sigma).sum();
  next.mu_inv_sigeps = (stats.n() + 1.0) / (2.0 * next.mu_inv_aeps + gamma * residual);

  const auto r = static_cast<Eigen::Index>(layout.blocks.size());
  next.mu_inv_au.resize(r);
  next.mu_inv_sigu.resize(r);
  for (Eigen::Index l = 0; l < r; ++l) {
    const auto& range = layout.blocks[static_cast<std::size_t>(l)];
    const auto begin = static_cast<Eigen::Index>(range.begin);
    const auto K = static_cast<Eigen::Index>(range.size());
    const double A = spec.priors.A_u[static_cast<std::size_t>(l)];
    next.mu_inv_au(l) = 1.0 / (state.mu_inv_sigu(l) + 1.0 / (A * A));
    const double ss = next.mu.segment(begin, K).squaredNorm() + next.sigma.diagonal().segment(begin, K).sum();
    next.mu_inv_sigu(l) = (static_cast<double>(K) + 1.0) / (2.0 * next.mu_inv_au(l) + ss);
    check_finite(next.mu_inv_sigu(l), "mu_q(1/sigma_u^2)");
  }

  check_finite(next.mu_inv_sigeps, "mu_q(1/sigma_eps^2)");
  check_finite(next.log_det_sigma, "log|Sigma_q|");
  if (!next.mu.allFinite()) throw NumericalError("variational update produced non-finite mu_q(beta,u)");
  if (!(next.mu_inv_sigeps > 0.0)) throw NumericalError("expected residual sum of squares became negative");
  return next;
}

double lower_bound(const SufficientStats& stats, const QState& state, const ModelSpec& spec, double gamma) {
  (void)gamma;  // enters only through the state produced by the sweep
  const auto layout = layout_of(spec);
  require_dims(stats, state, layout);
  if (!std::isfinite(state.log_det_sigma)) throw NumericalError("non-positive determinant of Sigma_q");

  const double n = stats.n();
  const auto p = static_cast<Eigen::Index>(layout.fixed.size());
  const double r = static_cast<double>(layout.blocks.size());
  const double P = static_cast<double>(layout.total);
  const double sb2 = spec.priors.sigma_beta_sq;
  constexpr double pi = std::numbers::pi;

  const double b_sigeps = (n + 1.0) / (2.0 * state.mu_inv_sigeps);
  const double b_aeps = 1.0 / state.mu_inv_aeps;

  double lb = 0.5 * P - 0.5 * n * std::log(2.0 * pi) - (r + 1.0) * std::log(pi) -
              0.5 * static_cast<double>(p) * std::log(sb2) + 0.5 * state.log_det_sigma +
              std::lgamma(0.5 * (n + 1.0)) -
              (state.mu.head(p).squaredNorm() + state.sigma.diagonal().head(p).sum()) / (2.0 * sb2) -
              0.5 * (n + 1.0) * std::log(b_sigeps) + state.mu_inv_aeps * state.mu_inv_sigeps -
              std::log(spec.priors.A_eps) - std::log(b_aeps);

  for (std::size_t l = 0; l < layout.blocks.size(); ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    const double K = static_cast<double>(layout.blocks[l].size());
    const double b_sigu = (K + 1.0) / (2.0 * state.mu_inv_sigu(li));
    const double b_au = 1.0 / state.mu_inv_au(li);
    lb += std::lgamma(0.5 * (K + 1.0)) - std::log(spec.priors.A_u[l]) - std::log(b_au) -
          0.5 * (K + 1.0) * std::log(b_sigu) + state.mu_inv_au(li) * state.mu_inv_sigu(li);
  }
  return lb;
}

double parameter_change(const QState& a, const QState& b) {
  auto rel = [](double x, double y) { return std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-300}); };
  double change = 0.0;
  if (a.mu.size() > 0) {
    const double scale = std::max(a.mu.cwiseAbs().maxCoeff(), b.mu.cwiseAbs().maxCoeff());
    if (scale > 0.0) change = (a.mu - b.mu).cwiseAbs().maxCoeff() / scale;
  }
  change = std::max(change, rel(a.mu_inv_sigeps, b.mu_inv_sigeps));
  for (Eigen::Index l = 0; l < a.mu_inv_sigu.size(); ++l) {
    change = std::max(change, rel(a.mu_inv_sigu(l), b.mu_inv_sigu(l)));
  }
  return change;
}

Posterior fit(const SufficientStats& stats, const ModelSpec& spec, const QState& init, const FitConfig& cfg,
              double gamma) {
  if (!(cfg.rel_tol > 0.0)) throw SpecError("rel_tol must be positive");
  if (cfg.max_iter < 1) throw SpecError("max_iter must be at least 1");
  const auto path = resolve_path(spec, cfg.covariance_path);

  Posterior post;
  post.q = init;
  for (int it = 0; it < cfg.max_iter; ++it) {
    QState next = update_q(stats, post.q, spec, path, gamma);
    const double lb = lower_bound(stats, next, spec, gamma);
    const double change = it == 0 ? std::numeric_limits<double>::infinity() : parameter_change(next, post.q);
    post.q = std::move(next);
    post.trace.push_back(lb);
    post.iterations = it + 1;
    if (it > 0) {
      const double prev = post.trace[post.trace.size() - 2];
      const double rel = std::abs(lb - prev) / std::max(std::abs(prev), std::numeric_limits<double>::min());
      if (rel < cfg.rel_tol && (cfg.param_tol <= 0.0 || change < cfg.param_tol)) {
        post.converged = true;
        break;
      }
    }
  }
  return post;
}

}  // namespace streamvb
