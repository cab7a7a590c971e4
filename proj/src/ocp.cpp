#include "qrnet/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <utility>

#include "qrnet/errors.hpp"

namespace qrnet {

double fd_step(double xi) { return std::max(1e-6, 1e-6 * std::abs(xi)); }

ControlAffineDynamics::ControlAffineDynamics(int state_dim, int control_dim,
                                             VectorField drift,
                                             Matrix input_matrix,
                                             MatrixField drift_jacobian,
                                             CurvatureField drift_curvature)
    : n_(state_dim),
      m_(control_dim),
      drift_(std::move(drift)),
      input_matrix_(std::move(input_matrix)),
      jacobian_(std::move(drift_jacobian)),
      curvature_(std::move(drift_curvature)) {
  require(n_ > 0 && m_ > 0, "dynamics: dimensions must be positive");
  require(input_matrix_->rows() == n_ && input_matrix_->cols() == m_,
          "dynamics: input matrix must be n x m");
  require(static_cast<bool>(drift_), "dynamics: drift is required");
}

ControlAffineDynamics ControlAffineDynamics::with_input_field(
    int state_dim, int control_dim, VectorField drift, MatrixField input_map,
    MatrixField drift_jacobian) {
  require(state_dim > 0 && control_dim > 0,
          "dynamics: dimensions must be positive");
  require(static_cast<bool>(drift) && static_cast<bool>(input_map),
          "dynamics: drift and input map are required");
  ControlAffineDynamics d;
  d.n_ = state_dim;
  d.m_ = control_dim;
  d.drift_ = std::move(drift);
  d.input_field_ = std::move(input_map);
  d.jacobian_ = std::move(drift_jacobian);
  return d;
}

Vector ControlAffineDynamics::drift(const Vector& x) const {
  require(x.size() == n_, "drift: state dimension mismatch");
  return drift_(x);
}

Matrix ControlAffineDynamics::input_map(const Vector& x) const {
  require(x.size() == n_, "input_map: state dimension mismatch");
  if (input_matrix_) return *input_matrix_;
  return input_field_(x);
}

Matrix ControlAffineDynamics::drift_jacobian(const Vector& x) const {
  require(x.size() == n_, "drift_jacobian: state dimension mismatch");
  if (jacobian_) return jacobian_(x);
  Matrix J(n_, n_);
  Vector xp = x;
  for (int j = 0; j < n_; ++j) {
    const double h = fd_step(x(j));
    xp(j) = x(j) + h;
    const Vector fp = drift_(xp);
    xp(j) = x(j) - h;
    const Vector fm = drift_(xp);
    xp(j) = x(j);
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

Matrix ControlAffineDynamics::drift_curvature(const Vector& x,
                                              const Vector& lambda) const {
  require(x.size() == n_ && lambda.size() == n_,
          "drift_curvature: dimension mismatch");
  if (curvature_) return curvature_(x, lambda);
  if (!jacobian_) {
    // Hessian of lambda' a(x) by second differences; nesting two first
    // differences at the small step would lose half the digits.
    Vector h(n_);
    for (int j = 0; j < n_; ++j) h(j) = 1.2e-4 * std::max(1.0, std::abs(x(j)));
    auto phi = [&](int i, double si, int j, double sj) {
      Vector xs = x;
      xs(i) += si * h(i);
      xs(j) += sj * h(j);
      return lambda.dot(drift_(xs));
    };
    Matrix H(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) {
        H(i, j) = (phi(i, 1, j, 1) - phi(i, 1, j, -1) - phi(i, -1, j, 1) + phi(i, -1, j, -1)) /
                  (4.0 * h(i) * h(j));
        H(j, i) = H(i, j);
      }
    return H;
  }
  Matrix C(n_, n_);
  Vector xp = x;
  for (int j = 0; j < n_; ++j) {
    const double h = fd_step(x(j));
    xp(j) = x(j) + h;
    const Vector gp = drift_jacobian(xp).transpose() * lambda;
    xp(j) = x(j) - h;
    const Vector gm = drift_jacobian(xp).transpose() * lambda;
    xp(j) = x(j);
    C.col(j) = (gp - gm) / (2.0 * h);
  }
  return C;
}

Matrix ControlAffineDynamics::input_jacobian(const Vector& x,
                                             const Vector& u) const {
  require(x.size() == n_ && u.size() == m_,
          "input_jacobian: dimension mismatch");
  if (input_matrix_) return Matrix::Zero(n_, n_);
  Matrix J(n_, n_);
  Vector xp = x;
  for (int j = 0; j < n_; ++j) {
    const double h = fd_step(x(j));
    xp(j) = x(j) + h;
    const Vector gp = input_field_(xp) * u;
    xp(j) = x(j) - h;
    const Vector gm = input_field_(xp) * u;
    xp(j) = x(j);
    J.col(j) = (gp - gm) / (2.0 * h);
  }
  return J;
}

Vector ControlAffineDynamics::vector_field(const Vector& x,
                                           const Vector& u) const {
  require(x.size() == n_ && u.size() == m_, "vector_field: dimension mismatch");
  if (input_matrix_) return drift_(x) + *input_matrix_ * u;
  return drift_(x) + input_field_(x) * u;
}

namespace {

bool symmetric(const Matrix& M) {
  return (M - M.transpose()).cwiseAbs().maxCoeff() <=
         1e-10 * (1.0 + M.cwiseAbs().maxCoeff());
}

}  // namespace

OcpProblem::OcpProblem(ControlAffineDynamics dynamics, QuadraticCost cost,
                       std::string tag)
    : dynamics_(std::move(dynamics)), cost_(std::move(cost)) {
  const int n = dynamics_.state_dim();
  const int m = dynamics_.control_dim();
  require(cost_.Q.rows() == n && cost_.Q.cols() == n, "problem: Q must be n x n");
  require(cost_.R.rows() == m && cost_.R.cols() == m, "problem: R must be m x m");
  require(cost_.x_bar.size() == n, "problem: xbar must have dimension n");
  require(cost_.u_bar.size() == m, "problem: ubar must have dimension m");
  require(symmetric(cost_.Q), "problem: Q must be symmetric");
  require(symmetric(cost_.R), "problem: R must be symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> q_eig(cost_.Q, Eigen::EigenvaluesOnly);
  require(q_eig.eigenvalues().minCoeff() >= -1e-10,
          "problem: Q must be positive semi-definite");
  Eigen::SelfAdjointEigenSolver<Matrix> r_eig(cost_.R, Eigen::EigenvaluesOnly);
  require(r_eig.eigenvalues().minCoeff() > 0.0,
          "problem: R must be positive definite");

  const Vector f_bar = dynamics_.vector_field(cost_.x_bar, cost_.u_bar);
  require(f_bar.norm() <= 1e-8,
          "problem: (xbar, ubar) is not an equilibrium of the dynamics");

  r_inv_ = cost_.R.llt().solve(Matrix::Identity(m, m));
  r_inv_ = 0.5 * (r_inv_ + r_inv_.transpose()).eval();

  Fingerprinter fp;
  fp.add(tag);
  fp.add(static_cast<long long>(n));
  fp.add(static_cast<long long>(m));
  fp.add(cost_.Q);
  fp.add(cost_.R);
  fp.add(Matrix(cost_.x_bar));
  fp.add(Matrix(cost_.u_bar));
  fp.add(dynamics_.drift_jacobian(cost_.x_bar));
  fp.add(dynamics_.input_map(cost_.x_bar));
  fingerprint_ = fp.hex();
}

double running_cost(const OcpProblem& problem, const Vector& x,
                    const Vector& u) {
  const auto& c = problem.cost();
  require(x.size() == problem.state_dim(), "running_cost: state dimension mismatch");
  require(u.size() == problem.control_dim(),
          "running_cost: control dimension mismatch");
  const Vector dx = x - c.x_bar;
  const Vector du = u - c.u_bar;
  return dx.dot(c.Q * dx) + du.dot(c.R * du);
}

Vector optimal_control(const OcpProblem& problem, const Vector& x,
                       const Vector& lambda) {
  require(x.size() == problem.state_dim() && lambda.size() == problem.state_dim(),
          "optimal_control: dimension mismatch");
  const Matrix g = problem.dynamics().input_map(x);
  return problem.cost().u_bar - 0.5 * problem.R_inverse() * (g.transpose() * lambda);
}

double hamiltonian(const OcpProblem& problem, const Vector& x,
                   const Vector& lambda, const Vector& u) {
  require(lambda.size() == problem.state_dim(), "hamiltonian: costate dimension mismatch");
  return running_cost(problem, x, u) +
         lambda.dot(problem.dynamics().vector_field(x, u));
}

Vector costate_rhs(const OcpProblem& problem, const Vector& x,
                   const Vector& lambda, const Vector& u) {
  require(x.size() == problem.state_dim() && lambda.size() == problem.state_dim() &&
              u.size() == problem.control_dim(),
          "costate_rhs: dimension mismatch");
  const auto& dyn = problem.dynamics();
  Vector grad = 2.0 * problem.cost().Q * (x - problem.cost().x_bar) +
                dyn.drift_jacobian(x).transpose() * lambda;
  if (!dyn.has_constant_input()) {
    grad += dyn.input_jacobian(x, u).transpose() * lambda;
  }
  return -grad;
}

double hjb_residual(const OcpProblem& problem, const Vector& x,
                    const Vector& lambda) {
  return hamiltonian(problem, x, lambda, optimal_control(problem, x, lambda));
}

void Fingerprinter::bytes(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h_ ^= p[i];
    h_ *= 1099511628211ULL;
  }
}

void Fingerprinter::add(const std::string& s) {
  add(static_cast<long long>(s.size()));
  bytes(s.data(), s.size());
}

void Fingerprinter::add(double v) {
  if (v == 0.0) v = 0.0;  // fold -0
  bytes(&v, sizeof v);
}

void Fingerprinter::add(long long v) { bytes(&v, sizeof v); }

void Fingerprinter::add(const Matrix& m) {
  add(static_cast<long long>(m.rows()));
  add(static_cast<long long>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) add(m(i, j));
}

std::string Fingerprinter::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", h_);
  return buf;
}

}  // namespace qrnet
