#include "qrnet/simd/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>

#include <algorithm>
#include <array>

#define QRNET_AVX2 __attribute__((target("avx2,fma")))

namespace qrnet::simd::avx2 {
namespace {

// tanh(x) = -expm1(-2|x|) / (2 + expm1(-2|x|)) with the sign of x restored.
// expm1 uses k = round(t / ln2), r = t - k ln2 and a degree-13 Taylor
// polynomial on |r| <= ln2/2, accurate to a few ulp.
QRNET_AVX2 inline __m256d tanh4(__m256d x) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d ax = _mm256_andnot_pd(sign_mask, x);
  __m256d t = _mm256_mul_pd(_mm256_set1_pd(-2.0), ax);
  t = _mm256_max_pd(t, _mm256_set1_pd(-40.0));

  const __m256d k = _mm256_round_pd(
      _mm256_mul_pd(t, _mm256_set1_pd(1.4426950408889634074)),
      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(6.93147180369123816490e-01), t);
  r = _mm256_fnmadd_pd(k, _mm256_set1_pd(1.90821492927058770002e-10), r);

  // poly(r) = sum_{j=0}^{11} r^j / (j+2)!
  static constexpr std::array<double, 12> c = {
      1.0 / 2,          1.0 / 6,           1.0 / 24,
      1.0 / 120,        1.0 / 720,         1.0 / 5040,
      1.0 / 40320,      1.0 / 362880,      1.0 / 3628800,
      1.0 / 39916800,   1.0 / 479001600,   1.0 / 6227020800};
  __m256d poly = _mm256_set1_pd(c[11]);
  for (int j = 10; j >= 0; --j) poly = _mm256_fmadd_pd(poly, r, _mm256_set1_pd(c[j]));
  const __m256d p = _mm256_fmadd_pd(_mm256_mul_pd(r, r), poly, r);

  // 2^k from the exponent bits; k is in [-58, 0].
  const __m256d biased = _mm256_add_pd(
      k, _mm256_set1_pd(1023.0 + 4503599627370496.0));
  const __m256d scale = _mm256_castsi256_pd(
      _mm256_slli_epi64(_mm256_castpd_si256(biased), 52));
  const __m256d em1 = _mm256_add_pd(_mm256_mul_pd(scale, p),
                                    _mm256_sub_pd(scale, _mm256_set1_pd(1.0)));

  const __m256d th = _mm256_div_pd(_mm256_xor_pd(em1, sign_mask),
                                   _mm256_add_pd(_mm256_set1_pd(2.0), em1));
  return _mm256_or_pd(th, _mm256_and_pd(x, sign_mask));
}

template <std::size_t N>
struct Tail {
  std::array<double, 4> v[N]{};
};

QRNET_AVX2 void activation_forward(std::span<const double> z,
                                   std::span<const double> zdot,
                                   std::span<double> a, std::span<double> s,
                                   std::span<double> adot) {
  const std::size_t n = z.size();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = tanh4(_mm256_loadu_pd(z.data() + i));
    const __m256d d = _mm256_fnmadd_pd(t, t, one);
    _mm256_storeu_pd(a.data() + i, t);
    _mm256_storeu_pd(s.data() + i, d);
    _mm256_storeu_pd(adot.data() + i,
                     _mm256_mul_pd(d, _mm256_loadu_pd(zdot.data() + i)));
  }
  if (i < n) {
    Tail<5> b;
    const std::size_t rem = n - i;
    std::copy_n(z.data() + i, rem, b.v[0].data());
    std::copy_n(zdot.data() + i, rem, b.v[1].data());
    const __m256d t = tanh4(_mm256_loadu_pd(b.v[0].data()));
    const __m256d d = _mm256_fnmadd_pd(t, t, one);
    _mm256_storeu_pd(b.v[2].data(), t);
    _mm256_storeu_pd(b.v[3].data(), d);
    _mm256_storeu_pd(b.v[4].data(),
                     _mm256_mul_pd(d, _mm256_loadu_pd(b.v[1].data())));
    std::copy_n(b.v[2].data(), rem, a.data() + i);
    std::copy_n(b.v[3].data(), rem, s.data() + i);
    std::copy_n(b.v[4].data(), rem, adot.data() + i);
  }
}

QRNET_AVX2 inline void backward4(const double* a, const double* s,
                                 const double* zdot, const double* a_bar,
                                 const double* adot_bar, double* r, double* q) {
  const __m256d vs = _mm256_loadu_pd(s);
  const __m256d sq = _mm256_mul_pd(vs, _mm256_loadu_pd(adot_bar));
  _mm256_storeu_pd(q, sq);
  // 2 * a * zdot * sq, evaluated left to right as in the reference
  const __m256d term = _mm256_mul_pd(
      _mm256_mul_pd(_mm256_mul_pd(_mm256_set1_pd(2.0), _mm256_loadu_pd(a)),
                    _mm256_loadu_pd(zdot)),
      sq);
  _mm256_storeu_pd(r, _mm256_sub_pd(_mm256_mul_pd(vs, _mm256_loadu_pd(a_bar)),
                                    term));
}

QRNET_AVX2 void activation_backward(std::span<const double> a,
                                    std::span<const double> s,
                                    std::span<const double> zdot,
                                    std::span<const double> a_bar,
                                    std::span<const double> adot_bar,
                                    std::span<double> r, std::span<double> q) {
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    backward4(a.data() + i, s.data() + i, zdot.data() + i, a_bar.data() + i,
              adot_bar.data() + i, r.data() + i, q.data() + i);
  }
  if (i < n) {
    Tail<7> b;
    const std::size_t rem = n - i;
    std::copy_n(a.data() + i, rem, b.v[0].data());
    std::copy_n(s.data() + i, rem, b.v[1].data());
    std::copy_n(zdot.data() + i, rem, b.v[2].data());
    std::copy_n(a_bar.data() + i, rem, b.v[3].data());
    std::copy_n(adot_bar.data() + i, rem, b.v[4].data());
    backward4(b.v[0].data(), b.v[1].data(), b.v[2].data(), b.v[3].data(),
              b.v[4].data(), b.v[5].data(), b.v[6].data());
    std::copy_n(b.v[5].data(), rem, r.data() + i);
    std::copy_n(b.v[6].data(), rem, q.data() + i);
  }
}

QRNET_AVX2 void tanh_forward(std::span<const double> z, std::span<double> a,
                             std::span<double> s) {
  const std::size_t n = z.size();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = tanh4(_mm256_loadu_pd(z.data() + i));
    _mm256_storeu_pd(a.data() + i, t);
    _mm256_storeu_pd(s.data() + i, _mm256_fnmadd_pd(t, t, one));
  }
  if (i < n) {
    Tail<3> b;
    const std::size_t rem = n - i;
    std::copy_n(z.data() + i, rem, b.v[0].data());
    const __m256d t = tanh4(_mm256_loadu_pd(b.v[0].data()));
    _mm256_storeu_pd(b.v[1].data(), t);
    _mm256_storeu_pd(b.v[2].data(), _mm256_fnmadd_pd(t, t, one));
    std::copy_n(b.v[1].data(), rem, a.data() + i);
    std::copy_n(b.v[2].data(), rem, s.data() + i);
  }
}

QRNET_AVX2 void axpy(double alpha, std::span<const double> x,
                     std::span<double> y) {
  const std::size_t n = x.size();
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y.data() + i,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x.data() + i),
                                     _mm256_loadu_pd(y.data() + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable* table() {
  static const KernelTable t{"avx2", activation_forward, activation_backward,
                             tanh_forward, axpy};
  return &t;
}

}  // namespace qrnet::simd::avx2

#else

namespace qrnet::simd::avx2 {
const KernelTable* table() { return nullptr; }
}  // namespace qrnet::simd::avx2

#endif
