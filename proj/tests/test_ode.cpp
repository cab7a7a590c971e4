#include <gtest/gtest.h>

#include <cmath>

#include "qrnet/errors.hpp"
#include "qrnet/ode.hpp"

using namespace qrnet;

TEST(Ode, ExponentialDecay) {
  auto rhs = [](double, const Vector& y) -> Vector { return -2.0 * y; };
  OdeOptions opt;
  opt.rtol = 1e-10;
  opt.atol = 1e-12;
  const OdeTrajectory tr = integrate_dopri(rhs, 0.0, 3.0, Vector::Ones(1), opt);
  ASSERT_FALSE(tr.diverged);
  EXPECT_DOUBLE_EQ(tr.t.back(), 3.0);
  EXPECT_NEAR(tr.y.back()(0), std::exp(-6.0), 1e-10);
  EXPECT_NEAR(tr.at(1.2345)(0), std::exp(-2.469), 1e-7);
}

TEST(Ode, HarmonicOscillatorToleranceScaling) {
  auto rhs = [](double, const Vector& y) -> Vector {
    Vector f(2);
    f << y(1), -y(0);
    return f;
  };
  Vector y0(2);
  y0 << 1.0, 0.0;
  double prev = 1.0;
  for (double tol : {1e-4, 1e-7, 1e-10}) {
    OdeOptions opt;
    opt.rtol = tol;
    opt.atol = tol;
    const OdeTrajectory tr = integrate_dopri(rhs, 0.0, 10.0, y0, opt);
    const double err = std::abs(tr.y.back()(0) - std::cos(10.0));
    EXPECT_LT(err, prev);
    EXPECT_LT(err, 1e3 * tol);
    prev = err;
  }
}

TEST(Ode, BlowUpIsReportedNotThrown) {
  auto rhs = [](double, const Vector& y) -> Vector { return y.cwiseProduct(y); };
  const OdeTrajectory tr = integrate_dopri(rhs, 0.0, 2.0, Vector::Ones(1));
  EXPECT_TRUE(tr.diverged);
  EXPECT_LT(tr.t.back(), 1.0);
  EXPECT_FALSE(tr.message.empty());
}

TEST(Ode, MonitorRestrictsBlowUpCheck) {
  // Second component grows fast but is not monitored.
  auto rhs = [](double, const Vector& y) -> Vector {
    Vector f(2);
    f << -y(0), 10.0;
    return f;
  };
  OdeOptions opt;
  opt.blowup_norm = 5.0;
  Vector y0(2);
  y0 << 1.0, 0.0;
  const OdeTrajectory tr =
      integrate_dopri(rhs, 0.0, 2.0, y0, opt, [](const Vector& y) { return std::abs(y(0)); });
  EXPECT_FALSE(tr.diverged);
  EXPECT_NEAR(tr.y.back()(1), 20.0, 1e-9);
}

TEST(Ode, ZeroLengthInterval) {
  auto rhs = [](double, const Vector& y) -> Vector { return y; };
  const OdeTrajectory tr = integrate_dopri(rhs, 1.0, 1.0, Vector::Ones(3));
  ASSERT_FALSE(tr.t.empty());
  EXPECT_EQ(tr.y.back(), Vector::Ones(3));
}

TEST(Ode, BackwardIntervalRejected) {
  auto rhs = [](double, const Vector& y) -> Vector { return y; };
  EXPECT_THROW(integrate_dopri(rhs, 1.0, 0.0, Vector::Ones(1)), ContractViolation);
}

TEST(Ode, InterpolationOutsideRangeRejected) {
  auto rhs = [](double, const Vector& y) -> Vector { return -y; };
  const OdeTrajectory tr = integrate_dopri(rhs, 0.0, 1.0, Vector::Ones(1));
  EXPECT_THROW(tr.at(1.5), ContractViolation);
}
