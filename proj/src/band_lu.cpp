#include "qrnet/band_lu.hpp"

#include <algorithm>
#include <cmath>

#include "qrnet/errors.hpp"
#include "qrnet/simd/kernels.hpp"

namespace qrnet {

StaircaseLU::StaircaseLU(Eigen::Index size) : n_(size), rows_(static_cast<std::size_t>(size)) {}

void StaircaseLU::set_row(Eigen::Index r, Eigen::Index first_col,
                          std::span<const double> values) {
  require(r >= 0 && r < n_, "StaircaseLU: row out of range");
  require(first_col >= 0 &&
              first_col + static_cast<Eigen::Index>(values.size()) <= n_,
          "StaircaseLU: columns out of range");
  Row& row = rows_[static_cast<std::size_t>(r)];
  row.lead = first_col;
  row.base = first_col;
  row.v.assign(values.begin(), values.end());
  factorized_ = false;
}

void StaircaseLU::factorize() {
  for (std::size_t r = 1; r < rows_.size(); ++r)
    require(rows_[r].lead >= rows_[r - 1].lead,
            "StaircaseLU: row start columns must be nondecreasing");

  const auto& kern = simd::active();
  steps_.assign(static_cast<std::size_t>(n_), {});
  double scale = 0.0;
  for (const Row& row : rows_)
    for (double x : row.v) scale = std::max(scale, std::abs(x));

  for (Eigen::Index k = 0; k < n_; ++k) {
    Eigen::Index last = k;
    while (last + 1 < n_ && rows_[static_cast<std::size_t>(last + 1)].lead <= k) ++last;

    Eigen::Index piv = k;
    double best = std::abs(rows_[static_cast<std::size_t>(k)].at(k));
    for (Eigen::Index r = k + 1; r <= last; ++r) {
      const double a = std::abs(rows_[static_cast<std::size_t>(r)].at(k));
      if (a > best) {
        best = a;
        piv = r;
      }
    }
    if (!(best > 1e-300) || best <= 1e-15 * scale * 1e-8) {
      throw SolverError("StaircaseLU: singular matrix", best);
    }
    std::swap(rows_[static_cast<std::size_t>(k)], rows_[static_cast<std::size_t>(piv)]);
    Step& step = steps_[static_cast<std::size_t>(k)];
    step.pivot = piv;

    Row& prow = rows_[static_cast<std::size_t>(k)];
    // drop the eliminated prefix of the pivot row
    if (prow.base < k) {
      prow.v.erase(prow.v.begin(), prow.v.begin() + (k - prow.base));
      prow.base = k;
    }
    prow.lead = k;
    const double pivot = prow.v[0];
    const Eigen::Index pend = prow.end();

    for (Eigen::Index r = k + 1; r <= last; ++r) {
      Row& row = rows_[static_cast<std::size_t>(r)];
      const double a = row.at(k);
      if (row.base < k) {
        row.v.erase(row.v.begin(), row.v.begin() + (k - row.base));
        row.base = k;
      }
      if (row.end() < pend) row.v.resize(static_cast<std::size_t>(pend - row.base), 0.0);
      row.lead = k + 1;
      if (a == 0.0) continue;
      const double l = a / pivot;
      step.multipliers.emplace_back(r, l);
      // row[k..pend) -= l * prow[k..pend)
      kern.axpy(-l, std::span<const double>(prow.v.data(), prow.v.size()),
                std::span<double>(row.v.data(), prow.v.size()));
      row.v[0] = 0.0;
    }
  }
  factorized_ = true;
}

Vector StaircaseLU::solve(const Vector& b) const {
  require(factorized_, "StaircaseLU: solve before factorize");
  require(b.size() == n_, "StaircaseLU: rhs dimension mismatch");
  Vector y = b;
  for (Eigen::Index k = 0; k < n_; ++k) {
    const Step& step = steps_[static_cast<std::size_t>(k)];
    if (step.pivot != k) std::swap(y(k), y(step.pivot));
    const double yk = y(k);
    for (const auto& [r, l] : step.multipliers) y(r) -= l * yk;
  }
  for (Eigen::Index k = n_ - 1; k >= 0; --k) {
    const Row& row = rows_[static_cast<std::size_t>(k)];
    double s = y(k);
    for (Eigen::Index c = k + 1; c < row.end(); ++c)
      s -= row.v[static_cast<std::size_t>(c - row.base)] * y(c);
    y(k) = s / row.v[static_cast<std::size_t>(k - row.base)];
  }
  return y;
}

}  // namespace qrnet
