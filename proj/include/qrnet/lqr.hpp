#pragma once

// Linear-quadratic regulator about the equilibrium of an OcpProblem.
//
// The continuous algebraic Riccati equation
//   Q + A'P + PA - P B R^{-1} B' P = 0
// is solved for its stabilizing solution via the stable invariant subspace of
// the Hamiltonian matrix [[A, -B R^{-1} B'], [-Q, -A']] (ordered complex Schur
// form), then polished by Newton-Kleinman sweeps. With the cost convention of
// ocp.hpp, V = (x - xbar)' P (x - xbar), lambda = 2 P (x - xbar) and
// u = ubar - K (x - xbar) with K = R^{-1} B' P.

#include <filesystem>

#include "qrnet/ocp.hpp"

namespace qrnet {

struct Linearization {
  Matrix A;
  Matrix B;
};

struct RiccatiSolution {
  Matrix P;
  Matrix K;
  double residual_norm = 0.0;
  Vector x_bar;
  Vector u_bar;
  Eigen::VectorXcd closed_loop_eigenvalues;
  /// Hautus test of (A, Q^{1/2}) at eigenvalues with Re >= 0.
  bool detectable = true;
  int newton_sweeps = 0;

  /// min |Re(eig(A - BK))|.
  double spectral_gap() const;
};

Linearization linearize(const OcpProblem& problem);

/// Throws SolverError when (A, B) is not stabilizable or the residual target
/// 1e-8 (1 + ||Q||_F) is missed. x_bar/u_bar of the result are zero.
RiccatiSolution solve_care(const Matrix& A, const Matrix& B, const Matrix& Q,
                           const Matrix& R);

/// linearize + solve_care, with the problem's equilibrium attached.
RiccatiSolution design_lqr(const OcpProblem& problem);

/// ||Q + A'P + PA - P B R^{-1} B' P||_F
double care_residual(const Matrix& A, const Matrix& B, const Matrix& Q,
                     const Matrix& R, const Matrix& P);

/// Solves M' X + X M = C for X (Bartels-Stewart on the complex Schur form).
Matrix solve_lyapunov(const Matrix& M, const Matrix& C);

bool is_stabilizable(const Matrix& A, const Matrix& B);
bool is_detectable(const Matrix& A, const Matrix& Q);

double lqr_value(const RiccatiSolution& sol, const Vector& x);
Vector lqr_costate(const RiccatiSolution& sol, const Vector& x);
Vector lqr_control(const RiccatiSolution& sol, const Vector& x);

/// Writes P.csv and K.csv (row-major, header "# care n=<n> m=<m>").
void write_care_csv(const RiccatiSolution& sol, const std::filesystem::path& dir);

}  // namespace qrnet
