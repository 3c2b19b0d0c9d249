#pragma once

#include <Eigen/Dense>
#include <random>

#include "streamvb/design.hpp"
#include "streamvb/model.hpp"

namespace testing_support {

inline double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline double rel_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

inline streamvb::BlockSpec spline(const std::string& source, std::size_t K, double lo = 0.0, double hi = 1.0) {
  streamvb::BlockSpec b;
  b.kind = streamvb::BlockKind::spline;
  b.name = "f_" + source;
  b.source = source;
  b.K = K;
  b.knots = {lo, hi, K - 2};
  return b;
}

inline streamvb::BlockSpec random_intercept(const std::string& column, std::size_t K) {
  streamvb::BlockSpec b;
  b.kind = streamvb::BlockKind::random_intercept;
  b.name = column;
  b.source = column;
  b.K = K;
  return b;
}

/// Random stream over predictors x1..xk in [0, 1] with an optional group
/// column, and y from a smooth mean plus noise.
inline streamvb::Stream random_stream(std::mt19937_64& rng, std::size_t n, std::size_t k, std::size_t groups = 0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  streamvb::Stream s;
  for (std::size_t j = 0; j < k; ++j) s.predictors.push_back("x" + std::to_string(j + 1));
  if (groups > 0) s.group_columns = {"g"};
  std::vector<double> effect(groups);
  for (auto& e : effect) e = 0.5 * z(rng);
  for (std::size_t i = 0; i < n; ++i) {
    streamvb::Record r;
    double mean = 0.3;
    for (std::size_t j = 0; j < k; ++j) {
      r.x.push_back(u(rng));
      mean += std::sin(2.0 * (j + 1) * r.x.back());
    }
    if (groups > 0) {
      r.groups = {static_cast<int>(rng() % groups)};
      mean += effect[static_cast<std::size_t>(r.groups[0])];
    }
    r.y = mean + 0.3 * z(rng);
    s.records.push_back(std::move(r));
  }
  return s;
}

}  // namespace testing_support
