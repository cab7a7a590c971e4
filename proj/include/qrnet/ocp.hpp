#pragma once

// Infinite-horizon optimal control problems with control-affine dynamics
//   xdot = a(x) + g(x) u
// and quadratic running cost
//   L(x, u) = (x - xbar)' Q (x - xbar) + (u - ubar)' R (u - ubar).
//
// No 1/2 factors appear in L, so the value function of the linearized problem
// is V = (x - xbar)' P (x - xbar) and its gradient is 2 P (x - xbar).

#include <functional>
#include <optional>
#include <string>

#include "qrnet/types.hpp"

namespace qrnet {

class ControlAffineDynamics {
 public:
  using VectorField = std::function<Vector(const Vector&)>;
  using MatrixField = std::function<Matrix(const Vector&)>;
  /// (x, lambda) -> d/dx [ J_a(x)' lambda ], an n x n matrix.
  using CurvatureField = std::function<Matrix(const Vector&, const Vector&)>;

  /// Constant input map g(x) = B.
  ControlAffineDynamics(int state_dim, int control_dim, VectorField drift,
                        Matrix input_matrix, MatrixField drift_jacobian = {},
                        CurvatureField drift_curvature = {});

  /// State-dependent input map.
  static ControlAffineDynamics with_input_field(int state_dim, int control_dim,
                                                VectorField drift,
                                                MatrixField input_map,
                                                MatrixField drift_jacobian = {});

  int state_dim() const { return n_; }
  int control_dim() const { return m_; }
  bool has_constant_input() const { return input_matrix_.has_value(); }
  bool has_analytic_jacobian() const { return static_cast<bool>(jacobian_); }

  Vector drift(const Vector& x) const;
  Matrix input_map(const Vector& x) const;
  /// Analytic when supplied, else central differences.
  Matrix drift_jacobian(const Vector& x) const;
  /// d/dx [ J_a(x)' lambda ]; analytic when supplied, else finite
  /// differences (second differences of lambda' a(x) without a Jacobian).
  Matrix drift_curvature(const Vector& x, const Vector& lambda) const;
  /// d/dx [ g(x) u ] at fixed u; zero for a constant input map.
  Matrix input_jacobian(const Vector& x, const Vector& u) const;

  Vector vector_field(const Vector& x, const Vector& u) const;

 private:
  ControlAffineDynamics() = default;

  int n_ = 0;
  int m_ = 0;
  VectorField drift_;
  std::optional<Matrix> input_matrix_;
  MatrixField input_field_;
  MatrixField jacobian_;
  CurvatureField curvature_;
};

struct QuadraticCost {
  Matrix Q;
  Matrix R;
  Vector x_bar;
  Vector u_bar;
};

class OcpProblem {
 public:
  /// Validates dimensions, Q symmetric PSD, R symmetric PD and
  /// f(xbar, ubar) = 0. `tag` is mixed into the fingerprint.
  OcpProblem(ControlAffineDynamics dynamics, QuadraticCost cost,
             std::string tag = {});

  const ControlAffineDynamics& dynamics() const { return dynamics_; }
  const QuadraticCost& cost() const { return cost_; }
  int state_dim() const { return dynamics_.state_dim(); }
  int control_dim() const { return dynamics_.control_dim(); }
  const Matrix& R_inverse() const { return r_inv_; }

  /// Hex digest of the problem parameters (tag, dimensions, Q, R, xbar, ubar
  /// and the linearization at the equilibrium).
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  ControlAffineDynamics dynamics_;
  QuadraticCost cost_;
  Matrix r_inv_;
  std::string fingerprint_;
};

double running_cost(const OcpProblem& problem, const Vector& x, const Vector& u);

/// u* = ubar - 1/2 R^{-1} g(x)' lambda, the minimizer of the Hamiltonian.
Vector optimal_control(const OcpProblem& problem, const Vector& x,
                       const Vector& lambda);

double hamiltonian(const OcpProblem& problem, const Vector& x,
                   const Vector& lambda, const Vector& u);

/// lambdadot = -H_x(x, lambda, u).
Vector costate_rhs(const OcpProblem& problem, const Vector& x,
                   const Vector& lambda, const Vector& u);

/// H(x, lambda, u*(x; lambda)); zero when lambda is the value gradient.
double hjb_residual(const OcpProblem& problem, const Vector& x,
                    const Vector& lambda);

/// Central-difference step used throughout: max(1e-6, 1e-6 |x_i|).
double fd_step(double xi);

/// Hex FNV-1a digest over raw doubles and strings.
class Fingerprinter {
 public:
  void add(const std::string& s);
  void add(double v);
  void add(long long v);
  void add(const Matrix& m);
  std::string hex() const;

 private:
  void bytes(const void* data, std::size_t len);
  unsigned long long h_ = 1469598103934665603ULL;
};

}  // namespace qrnet
