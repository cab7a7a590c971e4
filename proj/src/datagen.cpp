#include "qrnet/datagen.hpp"

#include <chrono>
#include <cmath>
#include <optional>

#include "json.hpp"
#include "qrnet/errors.hpp"
#include "qrnet/parallel.hpp"

namespace qrnet {

WarmStart lqr_warm_start(const OcpProblem& problem, const RiccatiSolution& care,
                         const Vector& x0, double tf, const OdeOptions& options) {
  require(x0.size() == problem.state_dim(), "lqr_warm_start: state dimension mismatch");
  require(tf > 0.0, "lqr_warm_start: tf must be positive");
  const auto& dyn = problem.dynamics();
  auto rhs = [&](double, const Vector& x) -> Vector {
    return dyn.vector_field(x, lqr_control(care, x));
  };
  const OdeTrajectory traj = integrate_dopri(rhs, 0.0, tf, x0, options);
  if (traj.diverged) {
    throw TrajectoryRejected("LQR warm start failed: " + traj.message);
  }
  WarmStart ws;
  ws.times = traj.t;
  const auto N = static_cast<Eigen::Index>(traj.t.size());
  ws.states.resize(problem.state_dim(), N);
  ws.costates.resize(problem.state_dim(), N);
  for (Eigen::Index j = 0; j < N; ++j) {
    ws.states.col(j) = traj.y[static_cast<std::size_t>(j)];
    ws.costates.col(j) = lqr_costate(care, ws.states.col(j));
  }
  return ws;
}

BvpSystem pmp_system(const OcpProblem& problem, const Vector& x0) {
  const int n = problem.state_dim();
  require(x0.size() == n, "pmp_system: state dimension mismatch");
  BvpSystem sys;
  sys.dim = 2 * n;
  const OcpProblem* p = &problem;
  sys.rhs = [p, n](double, const Vector& y) -> Vector {
    const Vector x = y.head(n);
    const Vector lam = y.tail(n);
    const Vector u = optimal_control(*p, x, lam);
    Vector dy(2 * n);
    dy.head(n) = p->dynamics().vector_field(x, u);
    dy.tail(n) = costate_rhs(*p, x, lam, u);
    return dy;
  };
  if (problem.dynamics().has_constant_input()) {
    const Matrix g = problem.dynamics().input_map(problem.cost().x_bar);
    const Matrix coupling = -0.5 * g * problem.R_inverse() * g.transpose();
    const Matrix twoQ = 2.0 * problem.cost().Q;
    sys.jacobian = [p, n, coupling, twoQ](double, const Vector& y) -> Matrix {
      const Vector x = y.head(n);
      const Vector lam = y.tail(n);
      const Matrix Ja = p->dynamics().drift_jacobian(x);
      Matrix J(2 * n, 2 * n);
      J.topLeftCorner(n, n) = Ja;
      J.topRightCorner(n, n) = coupling;
      J.bottomLeftCorner(n, n) = -(twoQ + p->dynamics().drift_curvature(x, lam));
      J.bottomRightCorner(n, n) = -Ja.transpose();
      return J;
    };
  }
  sys.bc = [n, x0](const Vector& ya, const Vector& yb) -> Vector {
    Vector r(2 * n);
    r.head(n) = ya.head(n) - x0;
    r.tail(n) = yb.tail(n);
    return r;
  };
  return sys;
}

Vector compute_value_along(const OcpProblem& problem, const BvpSolution& bvp) {
  const int n = problem.state_dim();
  const auto N = bvp.mesh.size();
  Vector v = Vector::Zero(static_cast<Eigen::Index>(N));
  auto L_at = [&](double t) {
    const Vector y = dense_eval(bvp, t);
    const Vector x = y.head(n);
    return running_cost(problem, x, optimal_control(problem, x, y.tail(n)));
  };
  for (std::size_t i = N - 1; i-- > 0;) {
    const double a = bvp.mesh[i];
    const double h = bvp.mesh[i + 1] - a;
    const double integral =
        h / 12.0 *
        (L_at(a) + 4.0 * L_at(a + 0.25 * h) + 2.0 * L_at(a + 0.5 * h) +
         4.0 * L_at(a + 0.75 * h) + L_at(a + h));
    v(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(i + 1)) + integral;
  }
  return v;
}

namespace {

std::vector<std::size_t> thin_indices(std::size_t count, int max_nodes) {
  std::vector<std::size_t> idx;
  const std::size_t target = std::max<std::size_t>(3, static_cast<std::size_t>(max_nodes));
  if (count <= target) {
    for (std::size_t i = 0; i < count; ++i) idx.push_back(i);
    return idx;
  }
  for (std::size_t k = 0; k < target; ++k) {
    const std::size_t i = (k * (count - 1) + (target - 1) / 2) / (target - 1);
    if (idx.empty() || i > idx.back()) idx.push_back(i);
  }
  if (idx.back() != count - 1) idx.push_back(count - 1);
  return idx;
}

// Initial mesh and guess from the warm start; pads to >= 3 nodes.
void initial_mesh(const WarmStart& ws, int max_nodes, std::vector<double>& mesh,
                  Matrix& guess) {
  const int n = static_cast<int>(ws.states.rows());
  if (ws.times.size() < 3) {
    const double tf = ws.times.back();
    mesh = {0.0, 0.5 * tf, tf};
    guess.resize(2 * n, 3);
    for (int j = 0; j < 3; ++j) {
      const Eigen::Index src = j == 0 ? 0 : static_cast<Eigen::Index>(ws.times.size() - 1);
      guess.col(j) << ws.states.col(src), ws.costates.col(src);
    }
    return;
  }
  const auto idx = thin_indices(ws.times.size(), max_nodes);
  mesh.clear();
  guess.resize(2 * n, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    mesh.push_back(ws.times[idx[k]]);
    guess.col(static_cast<Eigen::Index>(k)) << ws.states.col(static_cast<Eigen::Index>(idx[k])),
        ws.costates.col(static_cast<Eigen::Index>(idx[k]));
  }
}

}  // namespace

CharacteristicTrajectory solve_infinite_horizon(const OcpProblem& problem,
                                                const RiccatiSolution& care,
                                                const Vector& x0,
                                                const HorizonConfig& cfg) {
  const int n = problem.state_dim();
  require(x0.size() == n, "solve_infinite_horizon: state dimension mismatch");
  require(cfg.tf_initial > 0.0 && cfg.tf_extension > 0.0 && cfg.max_extensions >= 0,
          "solve_infinite_horizon: bad horizon schedule");
  const Vector& x_bar = problem.cost().x_bar;
  const double mu = std::max(care.spectral_gap(), 1e-3);

  double tf = cfg.tf_initial;
  const WarmStart ws = lqr_warm_start(problem, care, x0, tf, cfg.warm);
  std::vector<double> mesh;
  Matrix guess;
  initial_mesh(ws, cfg.initial_mesh_nodes, mesh, guess);

  const BvpSystem sys = pmp_system(problem, x0);
  BvpOptions bvp_opt = cfg.bvp;
  CharacteristicTrajectory out;

  for (int ext = 0;; ++ext) {
    bvp_opt.max_nodes = std::max(cfg.bvp.max_nodes, static_cast<int>(mesh.size()));
    BvpSolution bvp = solve_bvp(sys, mesh, guess, bvp_opt);
    if (!bvp.converged) {
      throw TrajectoryRejected("BVP not converged at tf=" + std::to_string(tf) + ": " +
                               bvp.message + " (residual " +
                               std::to_string(bvp.max_residual) + ")");
    }
    const Vector y_end = bvp.states.col(bvp.states.cols() - 1);
    const Vector x_end = y_end.head(n);
    const Vector lam_end = y_end.tail(n);
    const double L_end = running_cost(problem, x_end, optimal_control(problem, x_end, lam_end));
    if (L_end <= cfg.eps_L) {
      out.bvp = std::move(bvp);
      out.terminal_running_cost = L_end;
      out.extensions = ext;
      break;
    }
    if (ext >= cfg.max_extensions) {
      throw TrajectoryRejected("horizon limit reached at tf=" + std::to_string(tf) +
                               " with terminal running cost " + std::to_string(L_end));
    }
    // Extend: previous solution, then nodes decaying toward the equilibrium
    // at the LQR closed-loop rate.
    const double tf_old = tf;
    tf += cfg.tf_extension;
    const int extra = 20;
    mesh = bvp.mesh;
    guess.resize(2 * n, static_cast<Eigen::Index>(mesh.size() + extra));
    guess.leftCols(bvp.states.cols()) = bvp.states;
    for (int k = 1; k <= extra; ++k) {
      const double s = cfg.tf_extension * k / extra;
      mesh.push_back(tf_old + s);
      const Vector x = x_bar + std::exp(-mu * s) * (x_end - x_bar);
      guess.col(bvp.states.cols() + k - 1) << x, lqr_costate(care, x);
    }
  }

  const BvpSolution& bvp = out.bvp;
  const auto N = static_cast<Eigen::Index>(bvp.mesh.size());
  out.tf = bvp.mesh.back();
  out.times = bvp.mesh;
  out.states = bvp.states.topRows(n);
  out.costates = bvp.states.bottomRows(n);
  out.controls.resize(problem.control_dim(), N);
  for (Eigen::Index j = 0; j < N; ++j)
    out.controls.col(j) = optimal_control(problem, out.states.col(j), out.costates.col(j));
  out.values = compute_value_along(problem, bvp);

  const double L0 = running_cost(problem, out.states.col(0), out.controls.col(0));
  const double bound = cfg.eps_H * (1.0 + L0);
  for (Eigen::Index j = 0; j < N; ++j) {
    const double H = std::abs(hjb_residual(problem, out.states.col(j), out.costates.col(j)));
    out.max_hamiltonian = std::max(out.max_hamiltonian, H);
  }
  if (!(out.max_hamiltonian <= bound)) {
    throw TrajectoryRejected("Hamiltonian check failed: max |H| = " +
                             std::to_string(out.max_hamiltonian) + " > " +
                             std::to_string(bound));
  }
  return out;
}

std::vector<Sample> truncate_trajectory(const CharacteristicTrajectory& traj, double T,
                                        int traj_id) {
  require(T >= 1.0, "truncate_trajectory: T must be >= 1");
  const double t_max = traj.tf / T;
  std::vector<Sample> out;
  for (std::size_t j = 0; j < traj.times.size(); ++j) {
    if (traj.times[j] > t_max) break;
    const auto c = static_cast<Eigen::Index>(j);
    out.push_back(Sample{traj_id, traj.times[j], traj.states.col(c), traj.values(c),
                         traj.costates.col(c), traj.controls.col(c)});
  }
  return out;
}

std::string GenerationReport::to_json() const {
  nlohmann::ordered_json j;
  j["accepted"] = accepted;
  j["rejected"] = rejected;
  j["rejection_rate"] =
      trajectories.empty() ? 0.0 : static_cast<double>(rejected) / trajectories.size();
  j["wall_seconds"] = wall_seconds;
  auto& arr = j["trajectories"] = nlohmann::ordered_json::array();
  for (const auto& t : trajectories) {
    arr.push_back({{"id", t.id},
                   {"status", t.status},
                   {"accepted", t.accepted},
                   {"tf", t.tf},
                   {"nodes", t.nodes},
                   {"extensions", t.extensions},
                   {"wall_seconds", t.wall_seconds}});
  }
  return j.dump(2);
}

Dataset generate_dataset(const OcpProblem& problem, const RiccatiSolution& care,
                         const IcSampler& sampler, int n_traj, const HorizonConfig& cfg,
                         std::uint64_t seed, int workers, GenerationReport* report) {
  require(n_traj >= 1, "generate_dataset: n_traj must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  std::vector<Vector> ics;
  for (int i = 0; i < n_traj; ++i) ics.push_back(sampler(rng));

  std::vector<std::optional<CharacteristicTrajectory>> trajs(static_cast<std::size_t>(n_traj));
  GenerationReport rep;
  rep.trajectories.resize(static_cast<std::size_t>(n_traj));
  parallel_for(static_cast<std::size_t>(n_traj), workers, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    TrajectoryReport& tr = rep.trajectories[i];
    tr.id = static_cast<int>(i);
    try {
      trajs[i] = solve_infinite_horizon(problem, care, ics[i], cfg);
      tr.accepted = true;
      tr.status = "ok";
      tr.tf = trajs[i]->tf;
      tr.nodes = static_cast<int>(trajs[i]->times.size());
      tr.extensions = trajs[i]->extensions;
    } catch (const TrajectoryRejected& e) {
      tr.status = e.what();
    } catch (const SolverError& e) {
      tr.status = e.what();
    }
    tr.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  Dataset ds;
  ds.n = problem.state_dim();
  ds.m = problem.control_dim();
  ds.fingerprint = problem.fingerprint();
  ds.seed = seed;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (!trajs[i]) {
      ++rep.rejected;
      continue;
    }
    ++rep.accepted;
    auto samples = truncate_trajectory(*trajs[i], cfg.truncation_T, static_cast<int>(i));
    ds.samples.insert(ds.samples.end(), std::make_move_iterator(samples.begin()),
                      std::make_move_iterator(samples.end()));
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (report) *report = rep;
  if (2 * rep.rejected > n_traj) {
    throw DataGenerationError("data generation failed: " + std::to_string(rep.rejected) +
                              " of " + std::to_string(n_traj) + " trajectories rejected");
  }
  return ds;
}

}  // namespace qrnet
