#include "qrnet/sim.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "qrnet/errors.hpp"

namespace qrnet {

Controller Controller::lqr(RiccatiSolution care) {
  return Controller(std::make_shared<const Impl>(std::move(care)));
}

Controller Controller::model(QrnetParams params) {
  params.mlp.validate();
  return Controller(std::make_shared<const Impl>(std::move(params)));
}

Controller Controller::open_loop(CharacteristicTrajectory trajectory) {
  return Controller(std::make_shared<const Impl>(OpenLoopPlan{std::move(trajectory)}));
}

std::string Controller::kind() const {
  if (std::holds_alternative<RiccatiSolution>(*impl_)) return "lqr";
  if (const auto* q = std::get_if<QrnetParams>(impl_.get())) return to_string(q->mode);
  return "open-loop";
}

Vector Controller::control(const OcpProblem& problem, double t, const Vector& x) const {
  require(x.size() == problem.state_dim(), "controller: state dimension mismatch");
  if (const auto* care = std::get_if<RiccatiSolution>(impl_.get())) {
    require(care->P.rows() == x.size(), "controller: LQR dimension mismatch");
    return lqr_control(*care, x);
  }
  if (const auto* q = std::get_if<QrnetParams>(impl_.get())) {
    require(q->state_dim() == x.size(), "controller: model dimension mismatch");
    return qrnet_control(*q, problem, x);
  }
  const auto& traj = std::get<OpenLoopPlan>(*impl_).trajectory;
  const int n = problem.state_dim();
  if (t > traj.tf) return problem.cost().u_bar;
  const Vector y = dense_eval(traj.bvp, std::max(t, traj.bvp.t0()));
  return optimal_control(problem, y.head(n), y.tail(n));
}

double SimResult::cost_between(double t1, double t2) const {
  require(!times.empty() && t1 <= t2 && t1 >= times.front() && t2 <= times.back(),
          "cost_between: interval outside simulation");
  auto at = [&](double t) {
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    const auto j = static_cast<Eigen::Index>(it - times.begin());
    if (*it == t || j == 0) return cumulative_cost(j);
    const double ta = times[static_cast<std::size_t>(j - 1)], tb = *it;
    const double s = (t - ta) / (tb - ta);
    return (1.0 - s) * cumulative_cost(j - 1) + s * cumulative_cost(j);
  };
  return at(t2) - at(t1);
}

std::string SimResult::to_json() const {
  nlohmann::ordered_json j;
  j["controller"] = controller;
  j["cost"] = accrued_cost;
  j["terminal_state_norm"] = terminal_state_norm;
  j["terminal_running_cost"] = terminal_running_cost;
  j["stabilized"] = stabilized;
  j["diverged"] = diverged;
  j["message"] = message;
  j["times"] = times;
  auto cols = [](const Matrix& M) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c)
      arr.push_back(std::vector<double>(M.col(c).data(), M.col(c).data() + M.rows()));
    return arr;
  };
  j["states"] = cols(states);
  j["controls"] = cols(controls);
  j["cumulative_cost"] =
      std::vector<double>(cumulative_cost.data(), cumulative_cost.data() + cumulative_cost.size());
  return j.dump(1);
}

SimResult simulate_closed_loop(const OcpProblem& problem, const Controller& controller,
                               const Vector& x0, double tf, const SimOptions& opts) {
  const int n = problem.state_dim();
  require(x0.size() == n, "simulate_closed_loop: state dimension mismatch");
  require(tf > opts.t0, "simulate_closed_loop: tf must exceed t0");
  const auto& dyn = problem.dynamics();
  auto rhs = [&](double t, const Vector& z) -> Vector {
    const Vector x = z.head(n);
    const Vector u = controller.control(problem, t, x);
    Vector dz(n + 1);
    dz.head(n) = dyn.vector_field(x, u);
    dz(n) = running_cost(problem, x, u);
    return dz;
  };
  Vector z0(n + 1);
  z0 << x0, 0.0;
  OdeOptions ode{opts.rtol, opts.atol, opts.blowup_norm};
  const OdeTrajectory traj = integrate_dopri(
      rhs, opts.t0, tf, z0, ode, [n](const Vector& z) { return z.head(n).norm(); });

  SimResult res;
  res.controller = controller.kind();
  res.times = traj.t;
  const auto N = static_cast<Eigen::Index>(traj.t.size());
  res.states.resize(n, N);
  res.controls.resize(problem.control_dim(), N);
  res.cumulative_cost.resize(N);
  for (Eigen::Index j = 0; j < N; ++j) {
    const Vector& z = traj.y[static_cast<std::size_t>(j)];
    res.states.col(j) = z.head(n);
    res.controls.col(j) = controller.control(problem, res.times[static_cast<std::size_t>(j)], z.head(n));
    res.cumulative_cost(j) = z(n);
  }
  const Vector x_end = res.states.col(N - 1);
  res.accrued_cost = res.cumulative_cost(N - 1);
  res.terminal_state_norm = (x_end - problem.cost().x_bar).norm();
  res.terminal_running_cost = running_cost(problem, x_end, res.controls.col(N - 1));
  res.diverged = traj.diverged;
  res.message = traj.diverged ? traj.message : "ok";
  res.stabilized = !traj.diverged && std::isfinite(res.terminal_running_cost) &&
                   res.terminal_running_cost <= opts.stabilized_running_cost;
  return res;
}

double optimal_open_loop_cost(const OcpProblem& problem, const RiccatiSolution& care,
                              const Vector& x0, const HorizonConfig& cfg) {
  return solve_infinite_horizon(problem, care, x0, cfg).values(0);
}

}  // namespace qrnet
