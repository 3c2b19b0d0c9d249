#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace streamvb {

enum class BlockKind { spline, random_intercept };

enum class OutOfRangePolicy { error, clamp };

/// Prespecified predictor range and number of equidistant interior knots.
struct KnotConfig {
  double range_lo = 0.0;
  double range_hi = 1.0;
  std::size_t num_interior = 1;

  bool operator==(const KnotConfig&) const = default;
};

/// Prior hyperparameters of the Gaussian linear mixed model.
///
/// sigma_beta_sq is the prior variance of every fixed effect, A_eps and A_u
/// are the Half-Cauchy scales of the error and block standard deviations.
struct PriorHyperparams {
  double sigma_beta_sq = 1e8;
  double A_eps = 1e5;
  std::vector<double> A_u;  // one per block

  bool operator==(const PriorHyperparams&) const = default;
};

/// One random-coefficient block of Z: a penalized spline of a predictor or
/// a random intercept indexed by a group column.
struct BlockSpec {
  BlockKind kind = BlockKind::spline;
  std::string name;
  /// Number of columns K of the block.
  std::size_t K = 0;
  /// Predictor name for splines, group column name for random intercepts.
  std::string source;
  KnotConfig knots;  // splines only
  OutOfRangePolicy out_of_range = OutOfRangePolicy::clamp;

  bool operator==(const BlockSpec&) const = default;
};

/// Column layout of C = [X Z_1 ... Z_r] and the priors.
struct ModelSpec {
  bool intercept = true;
  /// Predictors entering X linearly, in column order after the intercept.
  std::vector<std::string> linear;
  std::vector<BlockSpec> blocks;
  PriorHyperparams priors;

  std::size_t p() const { return (intercept ? 1u : 0u) + linear.size(); }
  std::size_t r() const { return blocks.size(); }
  std::size_t P() const;

  bool operator==(const ModelSpec&) const = default;
};

/// Half-open column range [begin, end).
struct ColumnRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool contains(std::size_t col) const { return col >= begin && col < end; }
  bool operator==(const ColumnRange&) const = default;
};

struct BlockLayout {
  ColumnRange fixed;
  std::vector<ColumnRange> blocks;
  std::size_t total = 0;
  /// Set when the last block is the only random intercept block, which is
  /// what the block-partitioned covariance path needs.
  bool fast_path_eligible = false;

  /// Index of the range owning `col`: -1 for the fixed effects, otherwise the
  /// block index. Throws RangeError for col >= total.
  int owner(std::size_t col) const;
  /// Columns preceding the trailing random-intercept block.
  std::size_t leading_columns() const;
};

struct ValidationReport {
  std::vector<std::string> violations;
  std::optional<BlockLayout> layout;
  /// Several random intercept blocks: valid, but only the dense path applies.
  bool dense_path_only = false;

  bool ok() const { return violations.empty(); }
};

ValidationReport validate_spec(const ModelSpec& spec);

/// Layout of a spec that is known to be valid; throws SpecError otherwise.
BlockLayout layout_of(const ModelSpec& spec);

/// Fills priors.A_u with the default scale when it is empty.
ModelSpec with_default_priors(ModelSpec spec);

/// Human-readable column names: "(Intercept)", linear names, then
/// "<block>[k]" for every block column.
std::vector<std::string> column_names(const ModelSpec& spec);

}  // namespace streamvb
