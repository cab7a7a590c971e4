#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "helpers.hpp"
#include "qrnet/burgers.hpp"
#include "qrnet/errors.hpp"
#include "qrnet/lqr.hpp"

using namespace qrnet;
using namespace qrnet::testing;
using std::numbers::pi;

TEST(ChebGrid, SmallestGrid) {
  const auto g = burgers::cheb_grid(2);
  ASSERT_EQ(g.full_nodes.size(), 4);
  EXPECT_NEAR(g.full_nodes(0), 1.0, 1e-15);
  EXPECT_NEAR(g.full_nodes(3), -1.0, 1e-15);
  EXPECT_NEAR(g.nodes(0), 0.5, 1e-15);
  EXPECT_NEAR(g.nodes(1), -0.5, 1e-15);
  EXPECT_THROW(burgers::cheb_grid(1), ContractViolation);
}

TEST(ChebGrid, DifferentiatesCubicExactly) {
  for (int n : {4, 8, 16}) {
    const auto g = burgers::cheb_grid(n);
    const Vector xi = g.full_nodes;
    const Vector f = xi.array().cube();
    EXPECT_LE((g.D_full * f - Vector(3.0 * xi.array().square())).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_LE((g.D2_full * f - Vector(6.0 * xi)).cwiseAbs().maxCoeff(), 1e-9);
    // Rows of a differentiation matrix annihilate constants.
    EXPECT_LE((g.D_full * Vector::Ones(n + 2)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ChebGrid, QuadratureWeights) {
  const auto g = burgers::cheb_grid(16);
  EXPECT_NEAR(g.full_weights.sum(), 2.0, 1e-13);
  EXPECT_NEAR(g.full_weights.dot(Vector(g.full_nodes.array().square())), 2.0 / 3.0, 1e-13);
  EXPECT_GT(g.w.minCoeff(), 0.0);
  for (int j = 1; j < g.n; ++j) EXPECT_LT(g.nodes(j), g.nodes(j - 1));
}

TEST(Profiles, PeakAndSupport) {
  EXPECT_DOUBLE_EQ(burgers::alpha_profile(0.0), 1.0);
  EXPECT_EQ(burgers::alpha_profile(0.2), 0.0);
  EXPECT_EQ(burgers::alpha_profile(0.5), 0.0);
  const auto left = burgers::actuator_profiles(-0.6);
  const auto right = burgers::actuator_profiles(0.6);
  EXPECT_NEAR(left[0], 1.0, 1e-14);
  EXPECT_EQ(left[1], 0.0);
  EXPECT_NEAR(right[1], 1.0, 1e-14);
  EXPECT_EQ(right[0], 0.0);
  EXPECT_EQ(burgers::actuator_profiles(-0.8)[0], 0.0);
  EXPECT_EQ(burgers::actuator_profiles(0.4)[1], 0.0);
  EXPECT_EQ(burgers::actuator_profiles(0.0)[0], 0.0);
}

TEST(Dynamics, JacobianAndCurvatureMatchFiniteDifferences) {
  const auto bp = burgers::build_problem(12);
  const auto& dyn = bp.ocp.dynamics();
  std::mt19937_64 rng(4);
  const Vector x = burgers::sample_initial_condition(bp.grid, rng);
  const Vector lam = random_vector(rng, 12);
  Matrix J(12, 12), C(12, 12);
  for (int i = 0; i < 12; ++i) {
    const double h = 1e-6;
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    J.col(i) = (dyn.drift(xp) - dyn.drift(xm)) / (2 * h);
    C.col(i) = (dyn.drift_jacobian(xp).transpose() * lam -
                dyn.drift_jacobian(xm).transpose() * lam) / (2 * h);
  }
  EXPECT_LE((J - dyn.drift_jacobian(x)).norm(), 1e-6 * (1.0 + J.norm()));
  EXPECT_LE((C - dyn.drift_curvature(x, lam)).norm(), 1e-6 * (1.0 + C.norm()));
}

TEST(Dynamics, OriginIsUnstableEquilibrium) {
  const auto bp = burgers::build_problem(16);
  EXPECT_EQ(bp.ocp.dynamics().drift(Vector::Zero(16)), Vector::Zero(16));
  const Linearization lin = linearize(bp.ocp);
  EXPECT_GT(lin.A.eigenvalues().real().maxCoeff(), 0.0);
  const RiccatiSolution care = design_lqr(bp.ocp);
  EXPECT_LT(care.closed_loop_eigenvalues.real().maxCoeff(), 0.0);
}

TEST(Dynamics, LinearizedProblemMatchesJacobianAtOrigin) {
  const auto nl = burgers::build_problem(10);
  const auto lin = burgers::build_linearized_problem(10);
  EXPECT_LE((linearize(nl.ocp).A - linearize(lin.ocp).A).norm(), 1e-12);
  EXPECT_NE(nl.ocp.fingerprint(), lin.ocp.fingerprint());
}

TEST(InitialConditions, BoundsAndBoundary) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const auto a = burgers::sample_sine_coefficients(rng);
    for (int k = 1; k <= 10; ++k) EXPECT_LE(std::abs(a[static_cast<std::size_t>(k - 1)]), 1.0 / k);
  }
  // The full-grid series vanishes at xi = +-1.
  const auto a = burgers::sample_sine_coefficients(rng);
  double at_one = 0.0;
  for (int k = 1; k <= 10; ++k) at_one += a[static_cast<std::size_t>(k - 1)] * std::sin(k * pi);
  EXPECT_NEAR(at_one, 0.0, 1e-14);
  std::mt19937_64 r1(5), r2(5);
  const auto g = burgers::cheb_grid(16);
  EXPECT_EQ(burgers::sample_initial_condition(g, r1), burgers::sample_initial_condition(g, r2));
}

TEST(Norms, SineHasUnitNormAndScaling) {
  const auto g = burgers::cheb_grid(32);
  std::array<double, 10> c{};
  c[0] = 1.0;
  const Vector s = burgers::sine_series(g, c);
  EXPECT_NEAR(burgers::l2_norm(g, s), 1.0, 1e-10);
  const Vector y = burgers::scale_to_norm(g, s, 0.37);
  EXPECT_NEAR(burgers::l2_norm(g, y), 0.37, 1e-14);
  EXPECT_THROW(burgers::scale_to_norm(g, Vector::Zero(32), 1.0), ContractViolation);
}

TEST(Refinement, LqrValueConsistentAcrossResolutions) {
  std::array<double, 10> c{};
  c[0] = 0.3;
  c[1] = -0.2;
  c[2] = 0.1;
  double v[2];
  int i = 0;
  for (int n : {16, 32}) {
    const auto bp = burgers::build_problem(n);
    const RiccatiSolution care = design_lqr(bp.ocp);
    v[i++] = lqr_value(care, burgers::sine_series(bp.grid, c));
  }
  EXPECT_NEAR(v[0], v[1], 0.02 * v[1]);
}

TEST(GridCsv, WritesFiles) {
  const auto g = burgers::cheb_grid(4);
  const auto dir = std::filesystem::temp_directory_path() / "qrnet_grid";
  burgers::write_grid_csv(g, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "nodes.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "D.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "D2.csv"));
}
