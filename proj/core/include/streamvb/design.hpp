#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamvb/model.hpp"
#include "streamvb/spline.hpp"
#include "streamvb/suffstats.hpp"

namespace streamvb {

/// One observation: predictor values and group ids in the column order of the
/// Stream that holds it, plus the response.
struct Record {
  std::vector<double> x;
  std::vector<int> groups;
  double y = 0.0;

  bool operator==(const Record&) const = default;
};

/// A self-describing sequence of records.
struct Stream {
  std::vector<std::string> predictors;
  std::vector<std::string> group_columns;
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }
  bool operator==(const Stream&) const = default;
};

/// Resolved positions of a Design's inputs within a Stream's columns.
struct Binding {
  std::vector<std::size_t> predictor_index;  // per Design::predictors()
  std::vector<std::size_t> group_index;      // per random intercept block
};

/// Validated model plus its spline bases; turns records into rows of
/// C = [X Z_1 ... Z_r].
class Design {
 public:
  explicit Design(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const BlockLayout& layout() const { return layout_; }
  std::size_t columns() const { return layout_.total; }
  bool fast_path_eligible() const { return layout_.fast_path_eligible; }

  /// Distinct predictor names the design reads, linear ones first.
  const std::vector<std::string>& predictors() const { return predictors_; }
  /// Group column per random intercept block, in block order.
  const std::vector<std::string>& group_columns() const { return group_columns_; }
  /// Basis of block `l`; throws RangeError for random intercept blocks.
  const SplineBasis& basis(std::size_t l) const;

  Binding bind(const std::vector<std::string>& predictors, const std::vector<std::string>& groups) const;
  Binding bind(const Stream& stream) const { return bind(stream.predictors, stream.group_columns); }

  void fill_row(const Binding& binding, const Record& record, Eigen::Ref<Eigen::VectorXd> c) const;
  Eigen::VectorXd row(const Binding& binding, const Record& record) const;
  /// Row from named predictor values; `groups` holds one id per random
  /// intercept block.
  Eigen::VectorXd row(const std::map<std::string, double>& values, std::span<const int> groups = {}) const;
  Eigen::VectorXd row(const std::map<std::string, double>& values, std::optional<int> group) const;

  /// Dense n x P design matrix of a stream.
  Eigen::MatrixXd matrix(const Stream& stream) const;

  /// Sufficient statistics of records [begin, end) of a stream.
  SufficientStats stats(const Stream& stream, std::size_t begin, std::size_t end) const;
  SufficientStats stats(const Stream& stream) const { return stats(stream, 0, stream.size()); }

 private:
  void fill_from_values(std::span<const double> values, std::span<const int> groups,
                        Eigen::Ref<Eigen::VectorXd> c) const;

  ModelSpec spec_;
  BlockLayout layout_;
  std::vector<std::string> predictors_;
  std::vector<std::string> group_columns_;
  std::vector<std::size_t> linear_slot_;             // per linear term: slot in predictors_
  std::vector<std::optional<SplineBasis>> bases_;    // per block
  std::vector<std::size_t> block_slot_;              // per block: predictor or group slot
};

}  // namespace streamvb
