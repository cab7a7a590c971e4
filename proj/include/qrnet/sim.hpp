#pragma once

// Closed-loop simulation of xdot = f(x, u) under LQR, learned-model, or
// open-loop optimal control, with the running cost carried as an extra
// integrator state.

#include <filesystem>
#include <memory>
#include <string>
#include <variant>

#include "qrnet/datagen.hpp"
#include "qrnet/lqr.hpp"
#include "qrnet/model.hpp"
#include "qrnet/ode.hpp"

namespace qrnet {

struct OpenLoopPlan {
  CharacteristicTrajectory trajectory;
};

class Controller {
 public:
  static Controller lqr(RiccatiSolution care);
  static Controller model(QrnetParams params);
  /// u(t) from the optimal characteristic; ubar past its horizon.
  static Controller open_loop(CharacteristicTrajectory trajectory);

  /// "lqr", "qrnet", "plain-nn" or "open-loop".
  std::string kind() const;
  Vector control(const OcpProblem& problem, double t, const Vector& x) const;

 private:
  using Impl = std::variant<RiccatiSolution, QrnetParams, OpenLoopPlan>;
  explicit Controller(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

struct SimOptions {
  double t0 = 0.0;
  double rtol = 1e-6;
  double atol = 1e-8;
  double blowup_norm = 1e6;
  /// stabilized when L(x(tf), u(tf)) is at most this.
  double stabilized_running_cost = 1e-5;
};

struct SimResult {
  std::vector<double> times;
  Matrix states;    // n x N
  Matrix controls;  // m x N
  Vector cumulative_cost;  // N, starts at 0
  double accrued_cost = 0.0;
  double terminal_state_norm = 0.0;
  double terminal_running_cost = 0.0;
  bool stabilized = false;
  bool diverged = false;
  std::string message;
  std::string controller;

  /// Integral of L over [t1, t2] from the carried cost state.
  double cost_between(double t1, double t2) const;
  std::string to_json() const;
};

SimResult simulate_closed_loop(const OcpProblem& problem, const Controller& controller,
                               const Vector& x0, double tf, const SimOptions& opts = {});

/// v(0) of the infinite-horizon characteristic from x0.
double optimal_open_loop_cost(const OcpProblem& problem, const RiccatiSolution& care,
                              const Vector& x0, const HorizonConfig& cfg = {});

}  // namespace qrnet
