#include "qrnet/bvp.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <utility>

#include "qrnet/band_lu.hpp"
#include "qrnet/errors.hpp"
#include "qrnet/ocp.hpp"

namespace qrnet {
namespace {

constexpr double kGaussOffset = 0.28867513459481288225;  // sqrt(3)/6
constexpr double kDampingSigma = 0.2;
constexpr int kMaxDampingHalvings = 8;
constexpr int kMaxRefinementRounds = 40;

Matrix rhs_jacobian(const BvpSystem& sys, double t, const Vector& y) {
  if (sys.jacobian) return sys.jacobian(t, y);
  const int d = sys.dim;
  Matrix J(d, d);
  Vector yp = y;
  for (int j = 0; j < d; ++j) {
    const double h = fd_step(y(j));
    yp(j) = y(j) + h;
    const Vector fp = sys.rhs(t, yp);
    yp(j) = y(j) - h;
    const Vector fm = sys.rhs(t, yp);
    yp(j) = y(j);
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

std::pair<Matrix, Matrix> bc_jacobians(const BvpSystem& sys, const Vector& ya,
                                       const Vector& yb) {
  const int d = sys.dim;
  Matrix Ja(d, d), Jb(d, d);
  Vector p = ya;
  for (int j = 0; j < d; ++j) {
    const double h = fd_step(ya(j));
    p(j) = ya(j) + h;
    const Vector rp = sys.bc(p, yb);
    p(j) = ya(j) - h;
    const Vector rm = sys.bc(p, yb);
    p(j) = ya(j);
    Ja.col(j) = (rp - rm) / (2.0 * h);
  }
  p = yb;
  for (int j = 0; j < d; ++j) {
    const double h = fd_step(yb(j));
    p(j) = yb(j) + h;
    const Vector rp = sys.bc(ya, p);
    p(j) = yb(j) - h;
    const Vector rm = sys.bc(ya, p);
    p(j) = yb(j);
    Jb.col(j) = (rp - rm) / (2.0 * h);
  }
  return {Ja, Jb};
}

// Residual ordering: [left BC rows; interval 0; ...; interval N-2; right BC rows].
struct BcSplit {
  std::vector<int> left;
  std::vector<int> right;
  bool separated = true;
};

BcSplit split_bc(const Matrix& Ja, const Matrix& Jb) {
  BcSplit s;
  for (int i = 0; i < Ja.rows(); ++i) {
    const bool uses_a = Ja.row(i).cwiseAbs().maxCoeff() > 0.0;
    const bool uses_b = Jb.row(i).cwiseAbs().maxCoeff() > 0.0;
    if (uses_a && uses_b) s.separated = false;
    (uses_b && !uses_a ? s.right : s.left).push_back(i);
  }
  if (!s.separated) {
    s.left.resize(static_cast<std::size_t>(Ja.rows()));
    std::iota(s.left.begin(), s.left.end(), 0);
    s.right.clear();
  }
  return s;
}

struct Evaluation {
  Matrix F;     // f at nodes
  Matrix Ymid;  // collocation midpoint states
  Matrix Fmid;
  Vector bc;
  Vector residual;  // ordered as above
  double col_norm = 0.0;
  double bc_norm = 0.0;
  bool finite = true;
};

Evaluation evaluate(const BvpSystem& sys, const std::vector<double>& mesh,
                    const Matrix& Y, const BcSplit& split) {
  const int d = sys.dim;
  const auto N = static_cast<Eigen::Index>(mesh.size());
  Evaluation ev;
  ev.F.resize(d, N);
  for (Eigen::Index j = 0; j < N; ++j) ev.F.col(j) = sys.rhs(mesh[j], Y.col(j));
  ev.Ymid.resize(d, N - 1);
  ev.Fmid.resize(d, N - 1);
  ev.residual.resize(N * d);
  ev.bc = sys.bc(Y.col(0), Y.col(N - 1));
  require(ev.bc.size() == d, "solve_bvp: bc must return dim residuals");

  Eigen::Index row = 0;
  for (int i : split.left) ev.residual(row++) = ev.bc(i);
  for (Eigen::Index i = 0; i + 1 < N; ++i) {
    const double h = mesh[i + 1] - mesh[i];
    ev.Ymid.col(i) = 0.5 * (Y.col(i) + Y.col(i + 1)) - h / 8.0 * (ev.F.col(i + 1) - ev.F.col(i));
    ev.Fmid.col(i) = sys.rhs(mesh[i] + 0.5 * h, ev.Ymid.col(i));
    const Vector r = Y.col(i + 1) - Y.col(i) -
                     h / 6.0 * (ev.F.col(i) + 4.0 * ev.Fmid.col(i) + ev.F.col(i + 1));
    ev.residual.segment(row, d) = r;
    row += d;
    const double scaled =
        (r.array().abs() / (h * (1.0 + ev.Fmid.col(i).array().abs()))).maxCoeff();
    ev.col_norm = std::max(ev.col_norm, scaled);
  }
  for (int i : split.right) ev.residual(row++) = ev.bc(i);
  ev.bc_norm = ev.bc.cwiseAbs().maxCoeff();
  ev.finite = ev.residual.allFinite() && ev.F.allFinite();
  return ev;
}

// Factorized Newton matrix: staircase LU for separated BCs, sparse LU otherwise.
class NewtonMatrix {
 public:
  void build(const BvpSystem& sys, const std::vector<double>& mesh,
             const Matrix& Y, const Evaluation& ev, const Matrix& Ja,
             const Matrix& Jb, const BcSplit& split) {
    const int d = sys.dim;
    const auto N = static_cast<Eigen::Index>(mesh.size());
    const Eigen::Index size = N * d;
    separated_ = split.separated;
    const Matrix I = Matrix::Identity(d, d);

    std::vector<Matrix> Jn(static_cast<std::size_t>(N));
    for (Eigen::Index j = 0; j < N; ++j) Jn[j] = rhs_jacobian(sys, mesh[j], Y.col(j));

    if (separated_) {
      band_ = std::make_unique<StaircaseLU>(size);
    } else {
      triplets_.clear();
    }
    Eigen::Index row = 0;
    std::vector<double> buf;
    for (int i : split.left) {
      if (separated_) {
        buf.resize(static_cast<std::size_t>(d));
        for (int c = 0; c < d; ++c) buf[c] = Ja(i, c);
        band_->set_row(row, 0, buf);
      } else {
        for (int c = 0; c < d; ++c) {
          if (Ja(i, c) != 0.0) triplets_.emplace_back(row, c, Ja(i, c));
          if (Jb(i, c) != 0.0) triplets_.emplace_back(row, (N - 1) * d + c, Jb(i, c));
        }
      }
      ++row;
    }
    buf.resize(static_cast<std::size_t>(2 * d));
    for (Eigen::Index i = 0; i + 1 < N; ++i) {
      const double h = mesh[i + 1] - mesh[i];
      const Matrix Jm = rhs_jacobian(sys, mesh[i] + 0.5 * h, ev.Ymid.col(i));
      const Matrix left = -I - h / 6.0 * (Jn[i] + 4.0 * Jm * (0.5 * I + h / 8.0 * Jn[i]));
      const Matrix right = I - h / 6.0 * (Jn[i + 1] + 4.0 * Jm * (0.5 * I - h / 8.0 * Jn[i + 1]));
      for (int r = 0; r < d; ++r) {
        if (separated_) {
          for (int c = 0; c < d; ++c) {
            buf[c] = left(r, c);
            buf[d + c] = right(r, c);
          }
          band_->set_row(row, i * d, buf);
        } else {
          for (int c = 0; c < d; ++c) {
            triplets_.emplace_back(row, i * d + c, left(r, c));
            triplets_.emplace_back(row, (i + 1) * d + c, right(r, c));
          }
        }
        ++row;
      }
    }
    buf.resize(static_cast<std::size_t>(d));
    for (int i : split.right) {
      for (int c = 0; c < d; ++c) buf[c] = Jb(i, c);
      band_->set_row(row, (N - 1) * d, buf);
      ++row;
    }

    if (separated_) {
      band_->factorize();
    } else {
      Eigen::SparseMatrix<double> A(size, size);
      A.setFromTriplets(triplets_.begin(), triplets_.end());
      A.makeCompressed();
      sparse_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
      sparse_->analyzePattern(A);
      sparse_->factorize(A);
      if (sparse_->info() != Eigen::Success) {
        throw SolverError("solve_bvp: singular Newton matrix", 0.0);
      }
    }
  }

  Vector solve(const Vector& b) const {
    if (separated_) return band_->solve(b);
    return sparse_->solve(b);
  }

 private:
  bool separated_ = true;
  std::unique_ptr<StaircaseLU> band_;
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> sparse_;
  std::vector<Eigen::Triplet<double>> triplets_;
};

Vector vec_of(const Matrix& Y) { return Eigen::Map<const Vector>(Y.data(), Y.size()); }

struct NewtonOutcome {
  bool converged = false;
  bool damping_failed = false;
  int iterations = 0;
};

NewtonOutcome newton(const BvpSystem& sys, const std::vector<double>& mesh,
                     Matrix& Y, const BvpOptions& opt) {
  const double target = 1e-2 * opt.tol;
  NewtonOutcome out;
  auto [Ja, Jb] = bc_jacobians(sys, Y.col(0), Y.col(Y.cols() - 1));
  const BcSplit split = split_bc(Ja, Jb);
  Evaluation ev = evaluate(sys, mesh, Y, split);
  if (!ev.finite) {
    out.damping_failed = true;
    return out;
  }

  for (int it = 0; it < opt.max_newton; ++it) {
    if (ev.col_norm <= target && ev.bc_norm <= target) {
      out.converged = true;
      return out;
    }
    if (it > 0) std::tie(Ja, Jb) = bc_jacobians(sys, Y.col(0), Y.col(Y.cols() - 1));
    NewtonMatrix J;
    try {
      J.build(sys, mesh, Y, ev, Ja, Jb, split);
    } catch (const SolverError&) {
      out.damping_failed = true;
      return out;
    }
    const Vector step = -J.solve(ev.residual);
    const double cost = step.squaredNorm();
    const Vector y0 = vec_of(Y);
    // steps at roundoff level cannot be resolved by the damping test
    const double floor = 1e-28 * (1.0 + y0.squaredNorm());

    double alpha = 1.0;
    bool accepted = false;
    for (int k = 0; k <= kMaxDampingHalvings; ++k, alpha *= 0.5) {
      const Vector y_try = y0 + alpha * step;
      Matrix Y_try = Eigen::Map<const Matrix>(y_try.data(), Y.rows(), Y.cols());
      Evaluation ev_try = evaluate(sys, mesh, Y_try, split);
      if (!ev_try.finite) continue;
      const double cost_try = J.solve(ev_try.residual).squaredNorm();
      if (cost_try < (1.0 - 2.0 * alpha * kDampingSigma) * cost || cost <= floor) {
        Y = std::move(Y_try);
        ev = std::move(ev_try);
        accepted = true;
        break;
      }
    }
    ++out.iterations;
    if (!accepted) {
      out.damping_failed = true;
      return out;
    }
  }
  out.converged = ev.col_norm <= target && ev.bc_norm <= target;
  return out;
}

Vector hermite(double h, double s, const Vector& y0, const Vector& f0,
               const Vector& y1, const Vector& f1) {
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * f0 +
         (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * f1;
}

Vector hermite_derivative(double h, double s, const Vector& y0, const Vector& f0,
                          const Vector& y1, const Vector& f1) {
  const double s2 = s * s;
  return ((6 * s2 - 6 * s) * y0 + (-6 * s2 + 6 * s) * y1) / h +
         (3 * s2 - 4 * s + 1) * f0 + (3 * s2 - 2 * s) * f1;
}

// Normalized defect at the two Gauss points of each interval.
std::vector<double> interval_defects(const BvpSystem& sys,
                                     const std::vector<double>& mesh,
                                     const Matrix& Y, const Matrix& F) {
  std::vector<double> out(mesh.size() - 1, 0.0);
  for (std::size_t i = 0; i + 1 < mesh.size(); ++i) {
    const double h = mesh[i + 1] - mesh[i];
    for (double s : {0.5 - kGaussOffset, 0.5 + kGaussOffset}) {
      const Vector y = hermite(h, s, Y.col(i), F.col(i), Y.col(i + 1), F.col(i + 1));
      const Vector dy = hermite_derivative(h, s, Y.col(i), F.col(i), Y.col(i + 1), F.col(i + 1));
      const Vector f = sys.rhs(mesh[i] + s * h, y);
      const double r = ((dy - f).array().abs() / (1.0 + f.array().abs())).maxCoeff();
      out[i] = std::max(out[i], std::isfinite(r) ? r : std::numeric_limits<double>::infinity());
    }
  }
  return out;
}

}  // namespace

BvpSolution solve_bvp(const BvpSystem& system, std::vector<double> mesh,
                      Matrix Y, const BvpOptions& opt) {
  require(system.dim > 0 && system.rhs && system.bc, "solve_bvp: incomplete system");
  require(mesh.size() >= 3, "solve_bvp: initial mesh needs at least 3 nodes");
  for (std::size_t i = 1; i < mesh.size(); ++i)
    require(mesh[i] > mesh[i - 1], "solve_bvp: mesh must be strictly increasing");
  require(Y.rows() == system.dim && Y.cols() == static_cast<Eigen::Index>(mesh.size()),
          "solve_bvp: guess must be dim x mesh size");
  require(opt.tol > 0.0 && opt.max_nodes >= static_cast<int>(mesh.size()),
          "solve_bvp: bad options");

  BvpSolution sol;
  for (int round = 0;; ++round) {
    const NewtonOutcome nw = newton(system, mesh, Y, opt);
    sol.newton_iterations += nw.iterations;

    const auto N = static_cast<Eigen::Index>(mesh.size());
    Matrix F(system.dim, N);
    for (Eigen::Index j = 0; j < N; ++j) F.col(j) = system.rhs(mesh[j], Y.col(j));
    const std::vector<double> defects = interval_defects(system, mesh, Y, F);

    sol.mesh = mesh;
    sol.states = Y;
    sol.derivs = F;
    sol.max_residual = *std::max_element(defects.begin(), defects.end());
    sol.bc_residual = system.bc(Y.col(0), Y.col(N - 1)).cwiseAbs().maxCoeff();

    if (nw.damping_failed) {
      sol.converged = false;
      sol.message = "Newton iteration failed to make progress";
      return sol;
    }
    if (nw.converged && sol.max_residual <= opt.tol && sol.bc_residual <= opt.tol) {
      sol.converged = true;
      sol.message = "converged";
      return sol;
    }
    if (!opt.refine) {
      sol.converged = false;
      sol.message = nw.converged ? "residual above tolerance on fixed mesh"
                                 : "Newton did not converge on fixed mesh";
      return sol;
    }
    if (round >= kMaxRefinementRounds) {
      sol.converged = false;
      sol.message = "too many refinement rounds";
      return sol;
    }

    // Split failing intervals worst-first while capacity remains.
    std::vector<std::size_t> failing;
    for (std::size_t i = 0; i < defects.size(); ++i)
      if (defects[i] > opt.tol || !nw.converged) failing.push_back(i);
    if (!nw.converged) {
      // Newton stalled: split the intervals above tolerance, or all when
      // none is (the defect estimate is meaningless off the solution).
      std::vector<std::size_t> bad;
      for (std::size_t i : failing)
        if (defects[i] > opt.tol) bad.push_back(i);
      if (!bad.empty()) failing = std::move(bad);
    }
    std::stable_sort(failing.begin(), failing.end(),
                     [&](std::size_t a, std::size_t b) { return defects[a] > defects[b]; });
    const std::size_t capacity = static_cast<std::size_t>(opt.max_nodes) - mesh.size();
    if (capacity == 0 || failing.empty()) {
      sol.converged = false;
      sol.message = "maximum number of mesh nodes reached";
      return sol;
    }
    if (failing.size() > capacity) failing.resize(capacity);
    std::sort(failing.begin(), failing.end());

    std::vector<double> new_mesh;
    new_mesh.reserve(mesh.size() + failing.size());
    Matrix newY(system.dim, static_cast<Eigen::Index>(mesh.size() + failing.size()));
    Eigen::Index col = 0;
    std::size_t fi = 0;
    for (std::size_t i = 0; i < mesh.size(); ++i) {
      new_mesh.push_back(mesh[i]);
      newY.col(col++) = Y.col(static_cast<Eigen::Index>(i));
      if (fi < failing.size() && failing[fi] == i) {
        const double h = mesh[i + 1] - mesh[i];
        new_mesh.push_back(mesh[i] + 0.5 * h);
        newY.col(col++) = hermite(h, 0.5, Y.col(i), F.col(i), Y.col(i + 1), F.col(i + 1));
        ++fi;
      }
    }
    mesh = std::move(new_mesh);
    Y = std::move(newY);
    ++sol.refinements;
  }
}

Vector dense_eval(const BvpSolution& sol, double t) {
  require(!sol.mesh.empty(), "dense_eval: empty solution");
  require(t >= sol.mesh.front() && t <= sol.mesh.back(),
          "dense_eval: t outside the solution interval");
  const auto it = std::upper_bound(sol.mesh.begin(), sol.mesh.end(), t);
  std::size_t i = static_cast<std::size_t>(it - sol.mesh.begin());
  if (i > 0 && sol.mesh[i - 1] == t) return sol.states.col(static_cast<Eigen::Index>(i - 1));
  if (i >= sol.mesh.size()) return sol.states.col(sol.states.cols() - 1);
  const std::size_t a = i - 1;
  const double h = sol.mesh[a + 1] - sol.mesh[a];
  return hermite(h, (t - sol.mesh[a]) / h, sol.states.col(a), sol.derivs.col(a),
                 sol.states.col(a + 1), sol.derivs.col(a + 1));
}

Vector dense_derivative(const BvpSolution& sol, double t) {
  require(!sol.mesh.empty(), "dense_derivative: empty solution");
  require(t >= sol.mesh.front() && t <= sol.mesh.back(),
          "dense_derivative: t outside the solution interval");
  auto it = std::upper_bound(sol.mesh.begin(), sol.mesh.end(), t);
  std::size_t i = static_cast<std::size_t>(it - sol.mesh.begin());
  if (i >= sol.mesh.size()) i = sol.mesh.size() - 1;
  const std::size_t a = i - 1;
  const double h = sol.mesh[a + 1] - sol.mesh[a];
  return hermite_derivative(h, (t - sol.mesh[a]) / h, sol.states.col(a), sol.derivs.col(a),
                            sol.states.col(a + 1), sol.derivs.col(a + 1));
}

}  // namespace qrnet
