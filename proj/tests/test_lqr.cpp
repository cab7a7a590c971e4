#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "qrnet/burgers.hpp"
#include "qrnet/csv.hpp"
#include "qrnet/errors.hpp"
#include "qrnet/lqr.hpp"

using namespace qrnet;
using namespace qrnet::testing;

namespace {

void expect_valid(const RiccatiSolution& s, const Matrix& A, const Matrix& B, const Matrix& Q,
                  const Matrix& R) {
  EXPECT_LE(care_residual(A, B, Q, R, s.P), 1e-8 * (1.0 + Q.norm()));
  EXPECT_LT((s.P - s.P.transpose()).norm(), 1e-12 * (1.0 + s.P.norm()));
  Eigen::SelfAdjointEigenSolver<Matrix> es(s.P);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9 * (1.0 + s.P.norm()));
  const Eigen::VectorXcd ev = (A - B * s.K).eigenvalues();
  EXPECT_LT(ev.real().maxCoeff(), 0.0);
  EXPECT_LT((s.K - R.ldlt().solve(B.transpose() * s.P)).norm(), 1e-10 * (1.0 + s.K.norm()));
}

}  // namespace

TEST(Lqr, ScalarClosedForm) {
  const OcpProblem p = scalar_problem();
  const RiccatiSolution s = design_lqr(p);
  const double P = 1.0 + std::sqrt(2.0);
  EXPECT_NEAR(s.P(0, 0), P, 1e-12);
  EXPECT_NEAR(s.K(0, 0), P, 1e-12);
  EXPECT_NEAR(s.spectral_gap(), std::sqrt(2.0), 1e-12);
  Vector x(1);
  x << 2.0;
  EXPECT_NEAR(lqr_value(s, x), 4.0 * P, 1e-12);
  EXPECT_NEAR(lqr_costate(s, x)(0), 4.0 * P, 1e-12);
  EXPECT_NEAR(lqr_control(s, x)(0), -2.0 * P, 1e-12);
}

TEST(Lqr, RandomSystems) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> dim(1, 8);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = dim(rng);
    const int m = std::uniform_int_distribution<int>(1, n)(rng);
    const Matrix A = random_matrix(rng, n, n);
    const Matrix B = random_matrix(rng, n, m);
    const Matrix Lq = random_matrix(rng, n, n);
    const Matrix Q = Lq * Lq.transpose() + 0.1 * Matrix::Identity(n, n);
    const Matrix Lr = random_matrix(rng, m, m);
    const Matrix R = Lr * Lr.transpose() + 0.5 * Matrix::Identity(m, m);
    SCOPED_TRACE("trial " + std::to_string(trial));
    const RiccatiSolution s = solve_care(A, B, Q, R);
    expect_valid(s, A, B, Q, R);
  }
}

// Single input, four unstable modes: |P| ~ 1e9 and |K| ~ 5e4, so rounding P
// to double alone leaves a residual far above the absolute target. The
// solver must report that rather than return the inaccurate P.
TEST(Lqr, IllConditionedSystemReportsResidual) {
  std::mt19937_64 rng(1);
  Matrix A, B, Q, R;
  for (int t = 0; t <= 21; ++t) {
    const int n = 1 + t % 8, m = 1 + t % 3;
    A = random_matrix(rng, n, n);
    B = random_matrix(rng, n, m);
    const Matrix Mq = random_matrix(rng, n, n);
    const Matrix Mr = random_matrix(rng, m, m);
    Q = Mq * Mq.transpose();
    R = Mr * Mr.transpose() + Matrix::Identity(m, m);
  }
  ASSERT_EQ(A.rows(), 6);
  ASSERT_EQ(B.cols(), 1);
  EXPECT_TRUE(is_stabilizable(A, B));
  try {
    solve_care(A, B, Q, R);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_GT(e.residual(), 1e-8 * (1.0 + Q.norm()));
    EXPECT_TRUE(std::isfinite(e.residual()));
  }
}

TEST(Lqr, SemidefiniteQWithDetectablePair) {
  Matrix A(2, 2), B(2, 1), Q = Matrix::Zero(2, 2);
  A << 0, 1, 2, -1;
  B << 0, 1;
  Q(0, 0) = 1.0;
  const RiccatiSolution s = solve_care(A, B, Q, Matrix::Identity(1, 1));
  expect_valid(s, A, B, Q, Matrix::Identity(1, 1));
  EXPECT_TRUE(s.detectable);
}

TEST(Lqr, UnstabilizableThrows) {
  Matrix A(2, 2), B(2, 1);
  A << 1, 0, 0, 2;
  B << 1, 0;
  EXPECT_FALSE(is_stabilizable(A, B));
  EXPECT_THROW(solve_care(A, B, Matrix::Identity(2, 2), Matrix::Identity(1, 1)), SolverError);
}

TEST(Lqr, StabilizableButNotControllable) {
  Matrix A(2, 2), B(2, 1);
  A << 1, 0, 0, -2;
  B << 1, 0;
  EXPECT_TRUE(is_stabilizable(A, B));
  const RiccatiSolution s = solve_care(A, B, Matrix::Identity(2, 2), Matrix::Identity(1, 1));
  expect_valid(s, A, B, Matrix::Identity(2, 2), Matrix::Identity(1, 1));
}

TEST(Lqr, Detectability) {
  Matrix A(2, 2);
  A << 1, 0, 0, -1;
  Matrix Q = Matrix::Zero(2, 2);
  Q(1, 1) = 1.0;
  EXPECT_FALSE(is_detectable(A, Q));
  Q(0, 0) = 1.0;
  EXPECT_TRUE(is_detectable(A, Q));
}

TEST(Lqr, ShapeMismatchIsContractViolation) {
  EXPECT_THROW(solve_care(Matrix::Identity(2, 2), Matrix::Ones(3, 1), Matrix::Identity(2, 2),
                          Matrix::Identity(1, 1)),
               ContractViolation);
}

TEST(Lqr, LyapunovSolve) {
  std::mt19937_64 rng(5);
  for (int n : {1, 3, 6}) {
    const Matrix M = random_matrix(rng, n, n) - 3.0 * Matrix::Identity(n, n);
    const Matrix C = random_matrix(rng, n, n);
    const Matrix X = solve_lyapunov(M, C);
    EXPECT_LT((M.transpose() * X + X * M - C).norm(), 1e-10 * (1 + C.norm()));
  }
}

TEST(Lqr, BurgersLinearization) {
  const auto bp = burgers::build_problem(16);
  const Linearization lin = linearize(bp.ocp);
  const RiccatiSolution s = design_lqr(bp.ocp);
  expect_valid(s, lin.A, lin.B, bp.ocp.cost().Q, bp.ocp.cost().R);
  EXPECT_GT(lin.A.eigenvalues().real().maxCoeff(), 0.0);
}

TEST(Lqr, CsvRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "qrnet_test_care";
  std::filesystem::remove_all(dir);
  const RiccatiSolution s = design_lqr(burgers::build_problem(4).ocp);
  write_care_csv(s, dir);
  EXPECT_EQ(read_matrix_csv(dir / "P.csv"), s.P);
  EXPECT_EQ(read_matrix_csv(dir / "K.csv"), s.K);
}
