#pragma once

// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom with
// safeguarded cubic interpolation).

#include <functional>
#include <string>
#include <vector>

#include "qrnet/types.hpp"

namespace qrnet {

/// Returns f(theta) and writes the gradient into `grad`.
using Objective = std::function<double(const Vector& theta, Vector& grad)>;

struct LbfgsConfig {
  int memory = 10;
  int max_iter = 2000;
  double grad_tol = 1e-8;       // ||g||_inf
  double rel_decrease_tol = 1e-12;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 40;
};

enum class StopReason { gradient_tol, function_tol, max_iter, line_search_failure };

std::string to_string(StopReason reason);

struct LbfgsResult {
  Vector theta;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  StopReason reason = StopReason::max_iter;
  /// Objective at the start and after each accepted iterate.
  std::vector<double> history;
};

/// Optional per-iteration hook (iteration, value).
using IterationCallback = std::function<void(int, double)>;

LbfgsResult lbfgs_minimize(const Objective& objective, Vector theta0,
                           const LbfgsConfig& cfg = {},
                           const IterationCallback& callback = {});

}  // namespace qrnet
