#include "qrnet/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "qrnet/errors.hpp"

namespace qrnet {

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::gradient_tol: return "gradient-tol";
    case StopReason::function_tol: return "function-tol";
    case StopReason::max_iter: return "max-iter";
    case StopReason::line_search_failure: return "line-search-failure";
  }
  return "unknown";
}

namespace {

struct Point {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;  // directional derivative
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), clamped into
// the interior of [lo, hi].
double cubic_step(const Point& a, const Point& b) {
  const double lo = std::min(a.alpha, b.alpha), hi = std::max(a.alpha, b.alpha);
  const double d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.slope * b.slope;
  double t = 0.5 * (lo + hi);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
    const double denom = b.slope - a.slope + 2.0 * d2;
    if (denom != 0.0) t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
  }
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (lo + hi);
  return t;
}

struct LineSearch {
  const Objective& obj;
  const Vector& x;
  const Vector& dir;
  const LbfgsConfig& cfg;
  Point origin;
  int evals = 0;
  Vector last_x, last_g;
  Vector best_x, best_g;
  double best_f = std::numeric_limits<double>::infinity();
  Point accepted;

  Point eval(double alpha) {
    Vector xt = x + alpha * dir;
    Vector gt(x.size());
    const double f = obj(xt, gt);
    ++evals;
    Point p{alpha, f, gt.dot(dir)};
    if (std::isfinite(f) && f < best_f) {
      best_f = f;
      best_x = xt;
      best_g = gt;
    }
    last_x = std::move(xt);
    last_g = std::move(gt);
    return p;
  }

  bool armijo(const Point& p) const {
    return std::isfinite(p.f) && p.f <= origin.f + cfg.c1 * p.alpha * origin.slope;
  }
  bool curvature(const Point& p) const {
    return std::abs(p.slope) <= -cfg.c2 * origin.slope;
  }

  // Returns true with best_* set to the accepted point.
  bool zoom(Point lo, Point hi) {
    while (evals < cfg.max_line_search) {
      const double a = cubic_step(lo, hi);
      const Point p = eval(a);
      if (!armijo(p) || p.f >= lo.f) {
        hi = p;
      } else {
        if (curvature(p)) return accept(p);
        if (p.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = p;
      }
      if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, lo.alpha)) break;
    }
    return false;
  }

  // Always called on the most recent evaluation.
  bool accept(const Point& p) {
    accepted = p;
    return true;
  }

  bool run(double alpha0) {
    Point prev = origin;
    double alpha = alpha0;
    for (int i = 0; evals < cfg.max_line_search; ++i) {
      Point p = eval(alpha);
      if (!std::isfinite(p.f)) {
        alpha = 0.5 * (prev.alpha + alpha);
        continue;
      }
      if (!armijo(p) || (i > 0 && p.f >= prev.f)) return zoom(prev, p);
      if (curvature(p)) return accept(p);
      if (p.slope >= 0.0) return zoom(p, prev);
      prev = p;
      alpha *= 2.0;
    }
    return false;
  }
};

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& objective, Vector theta0, const LbfgsConfig& cfg,
                           const IterationCallback& callback) {
  require(cfg.memory >= 1 && cfg.max_iter >= 0, "lbfgs: bad configuration");
  require(cfg.c1 > 0.0 && cfg.c1 < cfg.c2 && cfg.c2 < 1.0, "lbfgs: need 0 < c1 < c2 < 1");
  LbfgsResult res;
  Vector x = std::move(theta0);
  Vector g(x.size());
  double f = objective(x, g);
  res.evaluations = 1;
  if (!std::isfinite(f)) throw SolverError("lbfgs: objective not finite at start", f);
  res.history.push_back(f);

  std::deque<Vector> S, Y;
  std::deque<double> rho;
  res.reason = StopReason::max_iter;
  for (int it = 0;; ++it) {
    if (g.size() == 0 || g.lpNorm<Eigen::Infinity>() <= cfg.grad_tol) {
      res.reason = StopReason::gradient_tol;
      break;
    }
    if (it >= cfg.max_iter) {
      res.reason = StopReason::max_iter;
      break;
    }
    // Two-loop recursion.
    Vector d = -g;
    std::vector<double> alpha(S.size());
    for (std::size_t k = S.size(); k-- > 0;) {
      alpha[k] = rho[k] * S[k].dot(d);
      d -= alpha[k] * Y[k];
    }
    if (!S.empty()) d *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (std::size_t k = 0; k < S.size(); ++k) {
      const double beta = rho[k] * Y[k].dot(d);
      d += (alpha[k] - beta) * S[k];
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      S.clear();
      Y.clear();
      rho.clear();
      d = -g;
      slope = -g.squaredNorm();
    }
    const double alpha0 = S.empty() ? std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>()) : 1.0;

    LineSearch ls{objective, x, d, cfg, Point{0.0, f, slope}, 0, {}, {}, {}, {},
                  std::numeric_limits<double>::infinity(), {}};
    const bool ok = ls.run(alpha0);
    res.evaluations += ls.evals;
    Vector x_new, g_new;
    double f_new;
    if (ok) {
      x_new = std::move(ls.last_x);
      g_new = std::move(ls.last_g);
      f_new = ls.accepted.f;
    } else if (ls.best_f < f) {
      x_new = ls.best_x;
      g_new = ls.best_g;
      f_new = ls.best_f;
    } else {
      res.reason = StopReason::line_search_failure;
      break;
    }

    const Vector s = x_new - x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    const double f_old = f;
    x = std::move(x_new);
    g = std::move(g_new);
    f = f_new;
    res.iterations = it + 1;
    res.history.push_back(f);
    if (callback) callback(res.iterations, f);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      S.push_back(s);
      Y.push_back(y);
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > cfg.memory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    if (!ok) {
      res.reason = StopReason::line_search_failure;
      break;
    }
    if (f_old - f <= cfg.rel_decrease_tol * std::max({std::abs(f_old), std::abs(f), 1.0})) {
      res.reason = StopReason::function_tol;
      break;
    }
  }
  res.theta = std::move(x);
  res.value = f;
  return res;
}

}  // namespace qrnet
