#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace gpvs {

/// Deduplicated table of term-by-term squared predictor differences.
///
/// For every pair (i, j) with i < n1, j < n2 the row
/// ((x1_ik - x2_jk)^2)_k is computed once; identical rows (bitwise) are stored
/// a single time in `unique_rows()` and `index()` maps the pair, laid out as
/// i * n2 + j, back to its row. Any function of a weighted distance can then be
/// evaluated on the unique rows only and re-inflated to an n1 x n2 matrix.
class DistanceCache {
 public:
  DistanceCache() = default;

  const Eigen::MatrixXd& unique_rows() const { return unique_; }
  const std::vector<std::int32_t>& index() const { return index_; }

  Eigen::Index n1() const { return n1_; }
  Eigen::Index n2() const { return n2_; }
  Eigen::Index p() const { return unique_.cols(); }
  Eigen::Index unique_count() const { return unique_.rows(); }

  /// Weighted distance per unique row: sum_k A*(l,k) * weights[k], skipping
  /// zero weights (coordinates with rho = 1).
  Eigen::VectorXd weighted(const Eigen::VectorXd& weights) const;

  /// Re-inflate per-unique-row values into the n1 x n2 matrix.
  Eigen::MatrixXd expand(const Eigen::VectorXd& per_unique) const;

  /// Full (n1*n2) x p squared-difference table.
  Eigen::MatrixXd inflate() const;

  friend DistanceCache build_cache(const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2);

 private:
  Eigen::MatrixXd unique_;
  std::vector<std::int32_t> index_;
  Eigen::Index n1_ = 0;
  Eigen::Index n2_ = 0;
};

/// Throws DataError on a column-count mismatch.
DistanceCache build_cache(const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2);

}  // namespace gpvs
