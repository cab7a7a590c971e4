#pragma once

// Adaptive explicit Runge-Kutta (Dormand-Prince 5(4)) with cubic Hermite
// dense output between accepted steps.

#include <functional>
#include <string>
#include <vector>

#include "qrnet/types.hpp"

namespace qrnet {

struct OdeOptions {
  double rtol = 1e-6;
  double atol = 1e-8;
  /// Integration stops and reports divergence when the monitored norm exceeds this.
  double blowup_norm = 1e6;
  long max_steps = 2'000'000;
};

struct OdeTrajectory {
  std::vector<double> t;
  std::vector<Vector> y;
  std::vector<Vector> f;
  bool diverged = false;
  std::string message;

  Vector at(double time) const;
};

using OdeRhs = std::function<Vector(double, const Vector&)>;

/// `monitor` maps the state to the quantity checked against blowup_norm
/// (default: the Euclidean norm of the whole state).
OdeTrajectory integrate_dopri(const OdeRhs& rhs, double t0, double tf, Vector y0,
                              const OdeOptions& options = {},
                              const std::function<double(const Vector&)>& monitor = {});

}  // namespace qrnet
