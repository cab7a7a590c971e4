#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "qrnet/simd/kernels.hpp"

using namespace qrnet;

namespace {

std::vector<double> random_values(std::size_t n, double scale, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-scale, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

const simd::KernelTable* vector_table() {
  if (!simd::cpu_has_avx2()) return nullptr;
  return simd::avx2::table();
}

// Units in the last place of b separating a from b.
double ulps(double a, double b) {
  if (a == b) return 0.0;
  const double gap = std::nextafter(std::abs(b), INFINITY) - std::abs(b);
  return std::abs(a - b) / gap;
}

// Measured worst case of the vector tanh is 3 ulps.
constexpr double kTanhUlps = 4.0;

}  // namespace

TEST(Simd, ScalarTanhMatchesStd) {
  const auto& k = simd::scalar::table();
  auto z = random_values(37, 5.0, 1);
  std::vector<double> a(z.size()), s(z.size());
  k.tanh_forward(z, a, s);
  for (std::size_t i = 0; i < z.size(); ++i) {
    EXPECT_EQ(a[i], std::tanh(z[i]));
    EXPECT_DOUBLE_EQ(s[i], 1.0 - a[i] * a[i]);
  }
}

TEST(Simd, ActiveTableIsOneOfTheVariants) {
  const auto& k = simd::active();
  EXPECT_TRUE(k.name == "scalar" || k.name == "avx2");
}

class SimdEquivalence : public ::testing::TestWithParam<std::size_t> {};

TEST_P(SimdEquivalence, TanhForwardWithinUlps) {
  const auto* v = vector_table();
  if (!v) GTEST_SKIP() << "no AVX2";
  const auto& s = simd::scalar::table();
  const std::size_t n = GetParam();
  for (double scale : {1e-8, 0.5, 3.0, 30.0, 800.0}) {
    auto z = random_values(n, scale, static_cast<unsigned>(n + 7));
    std::vector<double> a0(n), s0(n), a1(n), s1(n);
    s.tanh_forward(z, a0, s0);
    v->tanh_forward(z, a1, s1);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_LE(ulps(a1[i], a0[i]), kTanhUlps) << "z=" << z[i];
      EXPECT_NEAR(s1[i], s0[i], 2e-15) << "z=" << z[i];
    }
  }
}

TEST_P(SimdEquivalence, ActivationForwardBackward) {
  const auto* v = vector_table();
  if (!v) GTEST_SKIP() << "no AVX2";
  const auto& s = simd::scalar::table();
  const std::size_t n = GetParam();
  auto z = random_values(n, 4.0, 11);
  auto zd = random_values(n, 2.0, 12);
  auto ab = random_values(n, 1.0, 13);
  auto tb = random_values(n, 1.0, 14);
  std::vector<double> a0(n), s0(n), t0(n), a1(n), s1(n), t1(n);
  s.activation_forward(z, zd, a0, s0, t0);
  v->activation_forward(z, zd, a1, s1, t1);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_LE(ulps(a1[i], a0[i]), kTanhUlps);
    EXPECT_NEAR(t1[i], t0[i], 1e-15 * (1 + std::abs(t0[i])));
  }
  // Same inputs into the backward kernels: results are bit-identical.
  std::vector<double> r0(n), q0(n), r1(n), q1(n);
  s.activation_backward(a0, s0, zd, ab, tb, r0, q0);
  v->activation_backward(a0, s0, zd, ab, tb, r1, q1);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(r1[i], r0[i]);
    EXPECT_EQ(q1[i], q0[i]);
  }
}

TEST_P(SimdEquivalence, Axpy) {
  const auto* v = vector_table();
  if (!v) GTEST_SKIP() << "no AVX2";
  const auto& s = simd::scalar::table();
  const std::size_t n = GetParam();
  auto x = random_values(n, 3.0, 21);
  auto y0 = random_values(n, 3.0, 22);
  auto y1 = y0;
  s.axpy(-0.75, x, y0);
  v->axpy(-0.75, x, y1);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y0[i], 1e-15 * (1 + std::abs(y0[i])));
}

INSTANTIATE_TEST_SUITE_P(Lengths, SimdEquivalence,
                         ::testing::Values(0, 1, 2, 3, 4, 5, 7, 8, 9, 16, 31, 64, 257, 1000));

TEST(Simd, TanhSaturatesAndKeepsSign) {
  for (const simd::KernelTable* k : {&simd::scalar::table(), vector_table()}) {
    if (!k) continue;
    std::vector<double> z{-1e300, -50.0, -0.0, 0.0, 50.0, 1e300, 1e-320};
    std::vector<double> a(z.size()), s(z.size());
    k->tanh_forward(z, a, s);
    EXPECT_EQ(a[0], -1.0);
    EXPECT_EQ(a[1], -1.0);
    EXPECT_EQ(a[2], 0.0);
    EXPECT_EQ(a[3], 0.0);
    EXPECT_EQ(a[4], 1.0);
    EXPECT_EQ(a[5], 1.0);
    EXPECT_NEAR(a[6], 1e-320, 1e-322);
    EXPECT_EQ(s[0], 0.0);
    EXPECT_EQ(s[3], 1.0);
  }
}

TEST(Simd, AxpyZeroAlphaIsIdentity) {
  const auto& k = simd::active();
  auto x = random_values(13, 1.0, 3);
  auto y = random_values(13, 1.0, 4);
  const auto y0 = y;
  k.axpy(0.0, x, y);
  EXPECT_EQ(y, y0);
}
