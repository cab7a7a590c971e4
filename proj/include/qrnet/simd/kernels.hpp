#pragma once

// Elementwise kernels on the hot paths (MLP activations over sample batches,
// band-LU row updates). Each kernel has a scalar reference implementation and
// an AVX2 variant; `active()` picks one at first use based on CPUID. Setting
// QRNET_SIMD=scalar in the environment forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace qrnet::simd {

struct KernelTable {
  std::string_view name;

  /// a = tanh(z), s = 1 - a^2, adot = s * zdot.
  void (*activation_forward)(std::span<const double> z,
                             std::span<const double> zdot, std::span<double> a,
                             std::span<double> s, std::span<double> adot);

  /// Adjoint of activation_forward with respect to (z, zdot):
  ///   q = s * adot_bar
  ///   r = s * a_bar - 2 * a * s * zdot * adot_bar
  void (*activation_backward)(std::span<const double> a,
                              std::span<const double> s,
                              std::span<const double> zdot,
                              std::span<const double> a_bar,
                              std::span<const double> adot_bar,
                              std::span<double> r, std::span<double> q);

  /// a = tanh(z), s = 1 - a^2 (no tangent).
  void (*tanh_forward)(std::span<const double> z, std::span<double> a,
                       std::span<double> s);

  /// y += alpha * x
  void (*axpy)(double alpha, std::span<const double> x, std::span<double> y);
};

namespace scalar {
const KernelTable& table();
}

namespace avx2 {
/// Null when the binary was built without x86 support.
const KernelTable* table();
}

bool cpu_has_avx2();

/// Kernel table used by the library; resolved once.
const KernelTable& active();

}  // namespace qrnet::simd
