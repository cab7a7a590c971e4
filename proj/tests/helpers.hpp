#pragma once

#include <random>

#include "qrnet/ocp.hpp"

namespace qrnet::testing {

/// xdot = A x + B u, L = x'Qx + u'Ru about the origin.
inline OcpProblem linear_problem(const Matrix& A, const Matrix& B, const Matrix& Q,
                                 const Matrix& R, const std::string& tag = "linear") {
  const auto n = static_cast<int>(A.rows());
  const auto m = static_cast<int>(B.cols());
  ControlAffineDynamics dyn(
      n, m, [A](const Vector& x) -> Vector { return A * x; }, B,
      [A](const Vector&) -> Matrix { return A; },
      [n](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(n, n); });
  return OcpProblem(dyn, {Q, R, Vector::Zero(n), Vector::Zero(m)}, tag);
}

/// xdot = x + u, Q = R = 1: P = 1 + sqrt(2), closed loop rate sqrt(2).
inline OcpProblem scalar_problem() {
  return linear_problem(Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1),
                        Matrix::Ones(1, 1), "scalar");
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                            double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = d(rng);
  return M;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale);
}

inline double rel_err(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

}  // namespace qrnet::testing
