#include "qrnet/lqr.hpp"

#include <cmath>
#include <complex>
#include <limits>

#include "qrnet/csv.hpp"
#include "qrnet/errors.hpp"

namespace qrnet {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

double RiccatiSolution::spectral_gap() const {
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < closed_loop_eigenvalues.size(); ++i)
    gap = std::min(gap, std::abs(closed_loop_eigenvalues(i).real()));
  return gap;
}

Linearization linearize(const OcpProblem& problem) {
  const auto& dyn = problem.dynamics();
  const auto& c = problem.cost();
  Linearization lin;
  lin.A = dyn.drift_jacobian(c.x_bar);
  if (!dyn.has_constant_input()) lin.A += dyn.input_jacobian(c.x_bar, c.u_bar);
  lin.B = dyn.input_map(c.x_bar);
  return lin;
}

namespace {

using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

// Riccati residual matrix in extended precision. With a large P the
// quadratic term dwarfs the residual, and double rounding of that product
// alone would set a floor well above the true residual.
LMatrix care_residual_matrix(const Matrix& A, const Matrix& B, const Matrix& Q,
                             const Matrix& R, const LMatrix& P) {
  const LMatrix Al = A.cast<long double>();
  const LMatrix PB = P * B.cast<long double>();
  const LMatrix Rl = R.cast<long double>();
  const LMatrix quad = PB * Rl.llt().solve(PB.transpose());
  return Q.cast<long double>() + Al.transpose() * P + P * Al - quad;
}

}  // namespace

double care_residual(const Matrix& A, const Matrix& B, const Matrix& Q,
                     const Matrix& R, const Matrix& P) {
  return static_cast<double>(care_residual_matrix(A, B, Q, R, P.cast<long double>()).norm());
}

namespace {

// Swaps the adjacent diagonal entries k, k+1 of the upper-triangular T,
// updating the unitary Schur basis Z.
void swap_schur(CMatrix& T, CMatrix& Z, Eigen::Index k) {
  const Complex t11 = T(k, k);
  const Complex t22 = T(k + 1, k + 1);
  Eigen::Vector2cd v(T(k, k + 1), t22 - t11);
  const double nv = v.norm();
  if (nv == 0.0) return;
  v /= nv;
  Eigen::Matrix2cd G;
  G << v(0), -std::conj(v(1)), v(1), std::conj(v(0));
  T.middleRows(k, 2) = G.adjoint() * T.middleRows(k, 2);
  T.middleCols(k, 2) = T.middleCols(k, 2) * G;
  Z.middleCols(k, 2) = Z.middleCols(k, 2) * G;
  T(k + 1, k) = 0.0;
  T(k, k) = t22;
  T(k + 1, k + 1) = t11;
}

// Smallest singular value of M relative to its largest.
double relative_min_singular(const CMatrix& M) {
  Eigen::JacobiSVD<CMatrix> svd(M);
  const auto& s = svd.singularValues();
  if (s(0) == 0.0) return 0.0;
  return s(s.size() - 1) / s(0);
}

Matrix psd_sqrt(const Matrix& Q) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Q);
  const Vector d = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix gain(const Matrix& B, const Matrix& R, const Matrix& P) {
  return R.llt().solve(B.transpose() * P);
}

}  // namespace

bool is_stabilizable(const Matrix& A, const Matrix& B) {
  const Eigen::Index n = A.rows();
  Eigen::EigenSolver<Matrix> eig(A, false);
  const double scale = 1.0 + A.norm();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Complex mu = eig.eigenvalues()(i);
    if (mu.real() < -1e-12 * scale) continue;
    CMatrix M(n, n + B.cols());
    M.leftCols(n) = A.cast<Complex>() - mu * CMatrix::Identity(n, n);
    M.rightCols(B.cols()) = B.cast<Complex>();
    // rank test on M M^H, which is square n x n
    if (relative_min_singular(M * M.adjoint()) < 1e-20) return false;
  }
  return true;
}

bool is_detectable(const Matrix& A, const Matrix& Q) {
  const Eigen::Index n = A.rows();
  const Matrix C = psd_sqrt(Q);
  Eigen::EigenSolver<Matrix> eig(A, false);
  const double scale = 1.0 + A.norm();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Complex mu = eig.eigenvalues()(i);
    if (mu.real() < -1e-12 * scale) continue;
    CMatrix M(2 * n, n);
    M.topRows(n) = A.cast<Complex>() - mu * CMatrix::Identity(n, n);
    M.bottomRows(n) = C.cast<Complex>();
    if (relative_min_singular(M) < 1e-10) return false;
  }
  return true;
}

namespace {

// Bartels-Stewart on the complex Schur form of M, for M' X + X M = C.
template <typename Real>
Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic> lyapunov_impl(
    const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>& M,
    const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>& C) {
  using Cx = std::complex<Real>;
  using CMat = Eigen::Matrix<Cx, Eigen::Dynamic, Eigen::Dynamic>;
  using CVec = Eigen::Matrix<Cx, Eigen::Dynamic, 1>;
  const Eigen::Index n = M.rows();
  Eigen::ComplexSchur<CMat> schur(M.template cast<Cx>());
  const CMat& T = schur.matrixT();
  const CMat& U = schur.matrixU();
  const CMat Ct = U.adjoint() * C.template cast<Cx>() * U;
  // T^H Y + Y T = Ct, column by column; T^H is lower triangular.
  CMat Y = CMat::Zero(n, n);
  const CMat TH = T.adjoint();
  for (Eigen::Index j = 0; j < n; ++j) {
    CVec rhs = Ct.col(j);
    for (Eigen::Index k = 0; k < j; ++k) rhs -= Y.col(k) * T(k, j);
    CMat L = TH;
    L.diagonal().array() += T(j, j);
    Y.col(j) = L.template triangularView<Eigen::Lower>().solve(rhs);
  }
  Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic> X = (U * Y * U.adjoint()).real();
  if (C == C.transpose()) X = (Real(0.5) * (X + X.transpose())).eval();
  return X;
}

}  // namespace

Matrix solve_lyapunov(const Matrix& M, const Matrix& C) {
  const Eigen::Index n = M.rows();
  require(M.cols() == n && C.rows() == n && C.cols() == n,
          "solve_lyapunov: dimension mismatch");
  return lyapunov_impl<double>(M, C);
}

RiccatiSolution solve_care(const Matrix& A, const Matrix& B, const Matrix& Q,
                           const Matrix& R) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  require(A.cols() == n && B.rows() == n && Q.rows() == n && Q.cols() == n &&
              R.rows() == m && R.cols() == m,
          "solve_care: dimension mismatch");
  const double target = 1e-8 * (1.0 + Q.norm());

  if (!is_stabilizable(A, B)) {
    throw SolverError("solve_care: (A, B) is not stabilizable",
                      std::numeric_limits<double>::infinity());
  }

  const Matrix BRB = B * R.llt().solve(B.transpose());
  Matrix H(2 * n, 2 * n);
  H << A, -BRB, -Q, -A.transpose();

  Eigen::ComplexSchur<CMatrix> schur(H.cast<Complex>());
  CMatrix T = schur.matrixT();
  CMatrix Z = schur.matrixU();
  const double scale = 1.0 + H.norm();

  // Move eigenvalues with negative real part to the leading block.
  Eigen::Index placed = 0;
  for (Eigen::Index j = 0; j < 2 * n; ++j) {
    if (T(j, j).real() < 0.0) {
      for (Eigen::Index k = j; k > placed; --k) swap_schur(T, Z, k - 1);
      ++placed;
    }
  }
  double min_abs_re = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < 2 * n; ++j)
    min_abs_re = std::min(min_abs_re, std::abs(T(j, j).real()));
  if (placed != n || min_abs_re <= 1e-13 * scale) {
    throw SolverError(
        "solve_care: Hamiltonian matrix has eigenvalues on the imaginary axis "
        "(system not stabilizable/detectable)",
        std::numeric_limits<double>::infinity());
  }

  const CMatrix U1 = Z.topLeftCorner(n, n);
  const CMatrix U2 = Z.bottomLeftCorner(n, n);
  const CMatrix Pc =
      U1.transpose().partialPivLu().solve(U2.transpose()).transpose();
  Matrix P = Pc.real();
  P = 0.5 * (P + P.transpose()).eval();

  RiccatiSolution sol;
  double best = care_residual(A, B, Q, R, P);
  sol.P = P;

  // Newton steps in defect-correction form:
  //   (A - BK)' D + D (A - BK) = -res(P),  P <- P + D.
  // Solving for the small correction keeps the accuracy when P is large.
  // The residual is not monotone along Newton iterates, so the best one is
  // kept and the sweep stops after a few without improvement.
  // The iterate is carried in extended precision; each candidate is judged
  // by the residual of its double rounding, which is what is returned.
  LMatrix cur = sol.P.cast<long double>();
  const LMatrix Bl = B.cast<long double>();
  const LMatrix Rl = R.cast<long double>();
  int stale = 0;
  for (int sweep = 0; sweep < 30 && best > 1e-3 * target && stale < 3; ++sweep) {
    const LMatrix K = Rl.llt().solve(Bl.transpose() * cur);
    const LMatrix Acl = A.cast<long double>() - Bl * K;
    const LMatrix D = lyapunov_impl<long double>(Acl, -care_residual_matrix(A, B, Q, R, cur));
    cur += D;
    cur = (0.5L * (cur + cur.transpose())).eval();
    if (!cur.allFinite()) break;
    const Matrix rounded = cur.cast<double>();
    const double res = care_residual(A, B, Q, R, rounded);
    if (res < best) {
      best = res;
      sol.P = rounded;
      sol.newton_sweeps = sweep + 1;
      stale = 0;
    } else {
      ++stale;
    }
  }

  sol.K = gain(B, R, sol.P);
  sol.residual_norm = best;
  sol.x_bar = Vector::Zero(n);
  sol.u_bar = Vector::Zero(m);
  sol.closed_loop_eigenvalues = Eigen::EigenSolver<Matrix>(A - B * sol.K, false).eigenvalues();
  sol.detectable = is_detectable(A, Q);

  if (best > target) {
    throw SolverError("solve_care: residual target not reached", best);
  }
  if (sol.closed_loop_eigenvalues.real().maxCoeff() >= 0.0) {
    throw SolverError("solve_care: closed loop is not Hurwitz", best);
  }
  return sol;
}

RiccatiSolution design_lqr(const OcpProblem& problem) {
  const Linearization lin = linearize(problem);
  RiccatiSolution sol = solve_care(lin.A, lin.B, problem.cost().Q, problem.cost().R);
  sol.x_bar = problem.cost().x_bar;
  sol.u_bar = problem.cost().u_bar;
  return sol;
}

double lqr_value(const RiccatiSolution& sol, const Vector& x) {
  require(x.size() == sol.P.rows(), "lqr_value: state dimension mismatch");
  const Vector dx = x - sol.x_bar;
  return dx.dot(sol.P * dx);
}

Vector lqr_costate(const RiccatiSolution& sol, const Vector& x) {
  require(x.size() == sol.P.rows(), "lqr_costate: state dimension mismatch");
  return 2.0 * sol.P * (x - sol.x_bar);
}

Vector lqr_control(const RiccatiSolution& sol, const Vector& x) {
  require(x.size() == sol.P.rows(), "lqr_control: state dimension mismatch");
  return sol.u_bar - sol.K * (x - sol.x_bar);
}

void write_care_csv(const RiccatiSolution& sol, const std::filesystem::path& dir) {
  const std::string header = "care n=" + std::to_string(sol.P.rows()) +
                             " m=" + std::to_string(sol.K.rows());
  write_matrix_csv(dir / "P.csv", sol.P, header);
  write_matrix_csv(dir / "K.csv", sol.K, header);
}

}  // namespace qrnet
