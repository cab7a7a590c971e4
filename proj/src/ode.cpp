#include "qrnet/ode.hpp"

#include <algorithm>
#include <cmath>

#include "qrnet/errors.hpp"

namespace qrnet {
namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

double error_norm(const Vector& err, const Vector& y, const Vector& ynew,
                  const OdeOptions& o) {
  const Eigen::ArrayXd sc =
      o.atol + o.rtol * y.array().abs().max(ynew.array().abs());
  return std::sqrt((err.array() / sc).square().mean());
}

double initial_step(const OdeRhs& rhs, double t0, const Vector& y0, const Vector& f0,
                    double span, const OdeOptions& o) {
  const Eigen::ArrayXd sc = o.atol + o.rtol * y0.array().abs();
  const double d0 = std::sqrt((y0.array() / sc).square().mean());
  const double d1 = std::sqrt((f0.array() / sc).square().mean());
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  const Vector f1 = rhs(t0 + h0, y0 + h0 * f0);
  const double d2 = std::sqrt(((f1 - f0).array() / sc).square().mean()) / h0;
  const double h1 = (std::max(d1, d2) <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                 : std::pow(0.01 / std::max(d1, d2), 0.2);
  return std::min({100 * h0, h1, span});
}

}  // namespace

Vector OdeTrajectory::at(double time) const {
  require(!t.empty() && time >= t.front() && time <= t.back(),
          "OdeTrajectory::at: time outside the integrated interval");
  const auto it = std::upper_bound(t.begin(), t.end(), time);
  std::size_t i = static_cast<std::size_t>(it - t.begin());
  if (i > 0 && t[i - 1] == time) return y[i - 1];
  if (i >= t.size()) return y.back();
  const std::size_t a = i - 1;
  const double h = t[a + 1] - t[a];
  const double s = (time - t[a]) / h, s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y[a] + (s3 - 2 * s2 + s) * h * f[a] +
         (-2 * s3 + 3 * s2) * y[a + 1] + (s3 - s2) * h * f[a + 1];
}

OdeTrajectory integrate_dopri(const OdeRhs& rhs, double t0, double tf, Vector y,
                              const OdeOptions& o,
                              const std::function<double(const Vector&)>& monitor) {
  require(tf >= t0, "integrate_dopri: tf must be >= t0");
  auto measure = [&](const Vector& v) { return monitor ? monitor(v) : v.norm(); };

  OdeTrajectory out;
  Vector k1 = rhs(t0, y);
  out.t.push_back(t0);
  out.y.push_back(y);
  out.f.push_back(k1);
  if (tf == t0) return out;

  double t = t0;
  double h = initial_step(rhs, t0, y, k1, tf - t0, o);
  long steps = 0;
  while (t < tf) {
    if (++steps > o.max_steps) {
      out.diverged = true;
      out.message = "step limit reached";
      return out;
    }
    const bool last = t + h >= tf;
    if (last) h = tf - t;

    const Vector k2 = rhs(t + c2 * h, y + h * (a21 * k1));
    const Vector k3 = rhs(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
    const Vector k4 = rhs(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vector k5 = rhs(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vector k6 =
        rhs(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Vector ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vector k7 = rhs(t + h, ynew);
    const Vector err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double en = error_norm(err, y, ynew, o);
    if (!std::isfinite(en)) en = 1e10;
    if (en <= 1.0) {
      t = last ? tf : t + h;
      y = std::move(ynew);
      k1 = k7;
      out.t.push_back(t);
      out.y.push_back(y);
      out.f.push_back(k1);
      if (!(measure(y) <= o.blowup_norm)) {
        out.diverged = true;
        out.message = "state norm exceeded blow-up threshold";
        return out;
      }
      const double fac = en == 0.0 ? 10.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 10.0);
      h *= fac;
    } else {
      h *= std::clamp(0.9 * std::pow(en, -0.2), 0.1, 0.9);
      if (h < 1e-14 * std::max(1.0, std::abs(t))) {
        out.diverged = true;
        out.message = "step size underflow";
        return out;
      }
    }
  }
  return out;
}

}  // namespace qrnet
