#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "qrnet/burgers.hpp"
#include "qrnet/errors.hpp"
#include "qrnet/sim.hpp"

using namespace qrnet;
using namespace qrnet::testing;

TEST(Simulate, EquilibriumStaysPut) {
  const OcpProblem p = scalar_problem();
  const SimResult r =
      simulate_closed_loop(p, Controller::lqr(design_lqr(p)), Vector::Zero(1), 5.0);
  EXPECT_EQ(r.accrued_cost, 0.0);
  EXPECT_EQ(r.terminal_state_norm, 0.0);
  EXPECT_TRUE(r.stabilized);
  EXPECT_FALSE(r.diverged);
  EXPECT_EQ(r.controller, "lqr");
}

TEST(Simulate, ScalarLqrCostMatchesRiccati) {
  const OcpProblem p = scalar_problem();
  const RiccatiSolution care = design_lqr(p);
  Vector x0(1);
  x0 << 1.0;
  const SimResult r = simulate_closed_loop(p, Controller::lqr(care), x0, 30.0);
  EXPECT_NEAR(r.accrued_cost, 1.0 + std::sqrt(2.0), 0.005 * (1.0 + std::sqrt(2.0)));
  EXPECT_TRUE(r.stabilized);
  // x(t) = exp(-sqrt2 t)
  const std::size_t mid = r.times.size() / 2;
  EXPECT_NEAR(r.states(0, static_cast<Eigen::Index>(mid)),
              std::exp(-std::sqrt(2.0) * r.times[mid]), 1e-5);
}

TEST(Simulate, BurgersLqrStabilizesSmallPerturbation) {
  const auto bp = burgers::build_problem(16);
  const RiccatiSolution care = design_lqr(bp.ocp);
  std::mt19937_64 rng(1);
  const Vector x0 =
      burgers::scale_to_norm(bp.grid, burgers::sample_initial_condition(bp.grid, rng), 0.1);
  const SimResult r = simulate_closed_loop(bp.ocp, Controller::lqr(care), x0, 30.0);
  EXPECT_TRUE(r.stabilized);
  EXPECT_LT(r.terminal_state_norm, 1e-3);
  EXPECT_GT(r.accrued_cost, 0.0);

  // On the linearized dynamics the LQR cost over a long horizon is the quadratic value.
  const auto lin = burgers::build_linearized_problem(16);
  SimOptions tight;
  tight.rtol = 1e-10;
  tight.atol = 1e-12;
  const SimResult rl = simulate_closed_loop(lin.ocp, Controller::lqr(care), x0, 60.0, tight);
  EXPECT_TRUE(rl.stabilized);
  EXPECT_NEAR(rl.accrued_cost, lqr_value(care, x0), 1e-4 * lqr_value(care, x0));
}

TEST(Simulate, CostIsAdditive) {
  const auto bp = burgers::build_problem(8);
  const RiccatiSolution care = design_lqr(bp.ocp);
  std::mt19937_64 rng(2);
  const Vector x0 = burgers::sample_initial_condition(bp.grid, rng);
  SimOptions tight;
  tight.rtol = 1e-10;
  tight.atol = 1e-12;
  const SimResult full = simulate_closed_loop(bp.ocp, Controller::lqr(care), x0, 20.0, tight);
  EXPECT_NEAR(full.cost_between(0.0, 7.0) + full.cost_between(7.0, 20.0), full.accrued_cost,
              1e-14 * (1 + full.accrued_cost));
  EXPECT_EQ(full.cost_between(0.0, 20.0), full.accrued_cost);

  const SimResult first = simulate_closed_loop(bp.ocp, Controller::lqr(care), x0, 7.0, tight);
  SimOptions second_opts = tight;
  second_opts.t0 = 7.0;
  const Vector mid = first.states.col(first.states.cols() - 1);
  const SimResult second =
      simulate_closed_loop(bp.ocp, Controller::lqr(care), mid, 20.0, second_opts);
  EXPECT_NEAR(first.accrued_cost + second.accrued_cost, full.accrued_cost,
              1e-6 * full.accrued_cost);
  EXPECT_THROW(full.cost_between(5.0, 25.0), ContractViolation);
}

TEST(Simulate, OptimalCostBoundsControllers) {
  const auto bp = burgers::build_problem(16);
  const RiccatiSolution care = design_lqr(bp.ocp);
  for (std::uint64_t s : {11u, 12u}) {
    std::mt19937_64 rng(s);
    const Vector x0 =
        burgers::scale_to_norm(bp.grid, burgers::sample_initial_condition(bp.grid, rng), 0.8);
    const double opt = optimal_open_loop_cost(bp.ocp, care, x0);
    const SimResult lqr = simulate_closed_loop(bp.ocp, Controller::lqr(care), x0, 30.0);
    EXPECT_LE(opt, lqr.accrued_cost * (1 + 1e-4));
  }
}

TEST(Simulate, DivergenceIsReported) {
  const OcpProblem p = scalar_problem();
  const QrnetParams zero = init_params({1, 1}, 0, ModelMode::plain_nn, Matrix::Identity(1, 1),
                                       Vector::Zero(1), Vector::Zero(1));
  Vector x0(1);
  x0 << 1.0;
  const SimResult r = simulate_closed_loop(p, Controller::model(zero), x0, 30.0);
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.stabilized);
  EXPECT_LT(r.times.back(), 30.0);
  EXPECT_NE(r.message, "ok");
  EXPECT_EQ(r.controller, "plain-nn");
}

TEST(Simulate, OpenLoopFollowsCharacteristicOnStableHorizon) {
  const OcpProblem p = scalar_problem();
  const RiccatiSolution care = design_lqr(p);
  Vector x0(1);
  x0 << 1.0;
  const auto traj = solve_infinite_horizon(p, care, x0);
  const Controller c = Controller::open_loop(traj);
  EXPECT_EQ(c.kind(), "open-loop");
  EXPECT_EQ(c.control(p, 1e9, x0), Vector::Zero(1));
  const SimResult r = simulate_closed_loop(p, c, x0, 2.0);
  EXPECT_NEAR(r.states(0, r.states.cols() - 1), std::exp(-2.0 * std::sqrt(2.0)), 1e-3);
}

TEST(Simulate, InputValidationAndJson) {
  const OcpProblem p = scalar_problem();
  const Controller c = Controller::lqr(design_lqr(p));
  EXPECT_THROW(simulate_closed_loop(p, c, Vector::Zero(2), 1.0), ContractViolation);
  EXPECT_THROW(simulate_closed_loop(p, c, Vector::Zero(1), 0.0), ContractViolation);
  Vector x0(1);
  x0 << 0.5;
  const std::string j = simulate_closed_loop(p, c, x0, 3.0).to_json();
  EXPECT_NE(j.find("\"cost\""), std::string::npos);
  EXPECT_NE(j.find("\"stabilized\""), std::string::npos);
}
