#pragma once

// Two-point boundary value problems y' = f(t, y), bc(y(a), y(b)) = 0, solved
// by 3-stage Lobatto IIIA collocation (Simpson / cubic Hermite, 4th order)
// with damped Newton and residual-controlled mesh refinement.

#include <functional>
#include <string>
#include <vector>

#include "qrnet/types.hpp"

namespace qrnet {

struct BvpSystem {
  int dim = 0;
  std::function<Vector(double, const Vector&)> rhs;
  /// Optional analytic df/dy; central differences otherwise.
  std::function<Matrix(double, const Vector&)> jacobian;
  /// Must return `dim` residuals.
  std::function<Vector(const Vector&, const Vector&)> bc;
};

struct BvpOptions {
  double tol = 1e-6;
  int max_nodes = 5000;
  int max_newton = 20;
  /// When false, solve on the given mesh only.
  bool refine = true;
};

struct BvpSolution {
  std::vector<double> mesh;
  Matrix states;  // dim x N, column j at mesh[j]
  Matrix derivs;  // f(t_j, y_j)
  /// Max normalized ODE defect |S' - f| / (1 + |f|) over the Gauss points
  /// of every interval.
  double max_residual = 0.0;
  double bc_residual = 0.0;
  bool converged = false;
  int newton_iterations = 0;
  int refinements = 0;
  std::string message;

  double t0() const { return mesh.front(); }
  double tf() const { return mesh.back(); }
};

/// mesh0 strictly increasing with >= 3 nodes; guess is dim x mesh0.size().
/// Never throws on non-convergence: the result carries the best iterate and
/// `converged == false`.
BvpSolution solve_bvp(const BvpSystem& system, std::vector<double> mesh0,
                      Matrix guess, const BvpOptions& options = {});

/// C1 piecewise-cubic interpolant of the collocation solution; exact at nodes.
Vector dense_eval(const BvpSolution& sol, double t);

/// Derivative of the interpolant.
Vector dense_derivative(const BvpSolution& sol, double t);

}  // namespace qrnet
