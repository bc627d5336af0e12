#include "gpvs/distcache.hpp"

#include "gpvs/error.hpp"

#include <cmath>
#include <cstring>
#include <unordered_set>

namespace gpvs {

namespace {

// Rows are hashed and compared by their bit patterns so that deduplication is
// exact: two rows are merged only if every squared difference is identical.
// Keys are row ids into a row-major buffer that only grows at the back.
struct RowTable {
  std::vector<double> rows;
  Eigen::Index p = 0;
  const double* row(std::int32_t id) const { return rows.data() + static_cast<std::size_t>(id) * static_cast<std::size_t>(p); }
};

struct RowHash {
  const RowTable* table;
  std::size_t operator()(std::int32_t id) const {
    const double* r = table->row(id);
    std::uint64_t h = 1469598103934665603ULL;
    for (Eigen::Index j = 0; j < table->p; ++j) {
      std::uint64_t bits;
      std::memcpy(&bits, r + j, sizeof bits);
      h ^= bits + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

struct RowEq {
  const RowTable* table;
  bool operator()(std::int32_t a, std::int32_t b) const {
    return std::memcmp(table->row(a), table->row(b), static_cast<std::size_t>(table->p) * sizeof(double)) == 0;
  }
};

}  // namespace

DistanceCache build_cache(const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2) {
  if (x1.cols() != x2.cols()) {
    throw DataError(DataError::Code::Shape, "distance cache: column counts differ (" + std::to_string(x1.cols()) +
                                                " vs " + std::to_string(x2.cols()) + ")");
  }
  const Eigen::Index n1 = x1.rows();
  const Eigen::Index n2 = x2.rows();
  const Eigen::Index p = x1.cols();

  RowTable table;
  table.p = p;
  std::unordered_set<std::int32_t, RowHash, RowEq> seen(static_cast<std::size_t>(n1 * n2), RowHash{&table},
                                                        RowEq{&table});
  DistanceCache cache;
  cache.n1_ = n1;
  cache.n2_ = n2;
  cache.index_.resize(static_cast<std::size_t>(n1 * n2));

  std::int32_t count = 0;
  for (Eigen::Index i = 0; i < n1; ++i) {
    for (Eigen::Index j = 0; j < n2; ++j) {
      // Append the candidate row, then keep it only if it is new.
      for (Eigen::Index k = 0; k < p; ++k) {
        double d = x1(i, k) - x2(j, k);
        table.rows.push_back(d * d);
      }
      auto [it, inserted] = seen.insert(count);
      if (inserted) {
        ++count;
      } else {
        table.rows.resize(table.rows.size() - static_cast<std::size_t>(p));
      }
      cache.index_[static_cast<std::size_t>(i * n2 + j)] = *it;
    }
  }

  cache.unique_.resize(count, p);
  for (std::int32_t r = 0; r < count; ++r) {
    const double* row = table.row(r);
    for (Eigen::Index k = 0; k < p; ++k) cache.unique_(r, k) = row[k];
  }
  return cache;
}

Eigen::VectorXd DistanceCache::weighted(const Eigen::VectorXd& weights) const {
  if (weights.size() != unique_.cols()) {
    throw DataError(DataError::Code::Shape, "distance cache: weight vector has wrong length");
  }
  Eigen::VectorXd g = Eigen::VectorXd::Zero(unique_.rows());
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    const double w = weights[k];
    if (w == 0.0) continue;
    if (std::isinf(w)) {
      // rho_k = 0: infinite weight on nonzero distances, none on exact ties.
      for (Eigen::Index r = 0; r < g.size(); ++r) {
        if (unique_(r, k) != 0.0) g[r] = w;
      }
    } else {
      g.noalias() += w * unique_.col(k);
    }
  }
  return g;
}

Eigen::MatrixXd DistanceCache::expand(const Eigen::VectorXd& per_unique) const {
  Eigen::MatrixXd out(n1_, n2_);
  const std::int32_t* idx = index_.data();
  for (Eigen::Index i = 0; i < n1_; ++i) {
    for (Eigen::Index j = 0; j < n2_; ++j) out(i, j) = per_unique[idx[i * n2_ + j]];
  }
  return out;
}

Eigen::MatrixXd DistanceCache::inflate() const {
  Eigen::MatrixXd out(n1_ * n2_, unique_.cols());
  for (std::size_t r = 0; r < index_.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = unique_.row(index_[r]);
  return out;
}

}  // namespace gpvs
