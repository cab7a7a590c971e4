#pragma once

// LU factorization with partial pivoting for "staircase" matrices: each row's
// nonzeros start at a column that is nondecreasing down the rows. This is the
// structure of collocation Jacobians with separated boundary conditions
// (left BC rows, one block row per mesh interval, right BC rows). Fill-in is
// confined to a band, so the cost is O(N d^3) for N blocks of size d.

#include <span>
#include <vector>

#include "qrnet/types.hpp"

namespace qrnet {

class StaircaseLU {
 public:
  explicit StaircaseLU(Eigen::Index size);

  /// Row r holds values for columns [first_col, first_col + values.size()).
  /// first_col must be nondecreasing in r.
  void set_row(Eigen::Index r, Eigen::Index first_col, std::span<const double> values);

  /// Throws SolverError when a pivot vanishes.
  void factorize();

  Vector solve(const Vector& b) const;

  Eigen::Index size() const { return n_; }

 private:
  struct Row {
    Eigen::Index lead = 0;  // first column that may be nonzero
    Eigen::Index base = 0;  // column of v[0]
    std::vector<double> v;
    Eigen::Index end() const { return base + static_cast<Eigen::Index>(v.size()); }
    double at(Eigen::Index c) const {
      return (c >= base && c < end()) ? v[static_cast<std::size_t>(c - base)] : 0.0;
    }
  };
  struct Step {
    Eigen::Index pivot;
    std::vector<std::pair<Eigen::Index, double>> multipliers;
  };

  Eigen::Index n_;
  std::vector<Row> rows_;
  std::vector<Step> steps_;
  bool factorized_ = false;
};

}  // namespace qrnet
