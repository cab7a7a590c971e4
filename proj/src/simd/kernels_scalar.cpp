#include <cmath>

#include "qrnet/simd/kernels.hpp"

namespace qrnet::simd::scalar {
namespace {

void activation_forward(std::span<const double> z, std::span<const double> zdot,
                        std::span<double> a, std::span<double> s,
                        std::span<double> adot) {
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double t = std::tanh(z[i]);
    const double d = 1.0 - t * t;
    a[i] = t;
    s[i] = d;
    adot[i] = d * zdot[i];
  }
}

void activation_backward(std::span<const double> a, std::span<const double> s,
                         std::span<const double> zdot,
                         std::span<const double> a_bar,
                         std::span<const double> adot_bar, std::span<double> r,
                         std::span<double> q) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double sq = s[i] * adot_bar[i];
    q[i] = sq;
    r[i] = s[i] * a_bar[i] - 2.0 * a[i] * zdot[i] * sq;
  }
}

void tanh_forward(std::span<const double> z, std::span<double> a,
                  std::span<double> s) {
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double t = std::tanh(z[i]);
    a[i] = t;
    s[i] = 1.0 - t * t;
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{"scalar", activation_forward, activation_backward,
                             tanh_forward, axpy};
  return t;
}

}  // namespace qrnet::simd::scalar
