// AVX2+FMA variants of the batch kernels. Compiled only when the toolchain
// supports -mavx2; selected at runtime via kern::ops(). Range reduction and
// rational approximations follow the classic Cephes exp/log routines, which
// stay within ~2 ulp of libm over the reduced interval.

#include "irtmix/kernels.hpp"

#ifdef IRTMIX_HAVE_AVX2

#include <immintrin.h>

#include <cmath>
#include <cstdint>

namespace irtmix::kern {

namespace {

// ---------------------------------------------------------------------------
// exp core
// ---------------------------------------------------------------------------

const __m256d kExpHi = _mm256_set1_pd(709.0);
const __m256d kExpLo = _mm256_set1_pd(-708.0);
const __m256d kLog2E = _mm256_set1_pd(1.4426950408889634073599);
const __m256d kC1 = _mm256_set1_pd(6.93145751953125e-1);
const __m256d kC2 = _mm256_set1_pd(1.42860682030941723212e-6);

const __m256d kExpP0 = _mm256_set1_pd(1.26177193074810590878e-4);
const __m256d kExpP1 = _mm256_set1_pd(3.02994407707441961300e-2);
const __m256d kExpP2 = _mm256_set1_pd(9.99999999999999999910e-1);
const __m256d kExpQ0 = _mm256_set1_pd(3.00198505138664455042e-6);
const __m256d kExpQ1 = _mm256_set1_pd(2.52448340349684104192e-3);
const __m256d kExpQ2 = _mm256_set1_pd(2.27265548208155028766e-1);
const __m256d kExpQ3 = _mm256_set1_pd(2.00000000000000000005e0);

const __m256d kOne = _mm256_set1_pd(1.0);
const __m256d kHalf = _mm256_set1_pd(0.5);
const __m256d kZero = _mm256_setzero_pd();
const __m256d kInf = _mm256_set1_pd(HUGE_VAL);

// 2^n for integer-valued doubles n in [-1022, 1023]
inline __m256d pow2i(__m256d n) {
  const __m128i ni = _mm256_cvtpd_epi32(n);
  const __m256i wide = _mm256_cvtepi32_epi64(ni);
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(wide, _mm256_set1_epi64x(1023)), 52);
  return _mm256_castsi256_pd(bits);
}

inline __m256d exp_core(__m256d x) {
  const __m256d orig = x;
  x = _mm256_min_pd(_mm256_max_pd(x, kExpLo), kExpHi);

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, kLog2E),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(n, kC1, x);
  x = _mm256_fnmadd_pd(n, kC2, x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_fmadd_pd(kExpP0, xx, kExpP1);
  px = _mm256_fmadd_pd(px, xx, kExpP2);
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_fmadd_pd(kExpQ0, xx, kExpQ1);
  qx = _mm256_fmadd_pd(qx, xx, kExpQ2);
  qx = _mm256_fmadd_pd(qx, xx, kExpQ3);

  __m256d y = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  y = _mm256_fmadd_pd(y, _mm256_set1_pd(2.0), kOne);
  y = _mm256_mul_pd(y, pow2i(n));

  y = _mm256_blendv_pd(y, kZero, _mm256_cmp_pd(orig, kExpLo, _CMP_LT_OQ));
  y = _mm256_blendv_pd(y, kInf, _mm256_cmp_pd(orig, kExpHi, _CMP_GT_OQ));
  y = _mm256_blendv_pd(y, orig, _mm256_cmp_pd(orig, orig, _CMP_UNORD_Q));
  return y;
}

// ---------------------------------------------------------------------------
// log core (positive normal inputs)
// ---------------------------------------------------------------------------

const __m256d kSqrtHalf = _mm256_set1_pd(0.70710678118654752440);
const __m256d kLogP0 = _mm256_set1_pd(1.01875663804580931796e-4);
const __m256d kLogP1 = _mm256_set1_pd(4.97494994976747001425e-1);
const __m256d kLogP2 = _mm256_set1_pd(4.70579119878881725854e0);
const __m256d kLogP3 = _mm256_set1_pd(1.44989225341610930846e1);
const __m256d kLogP4 = _mm256_set1_pd(1.79368678507819816313e1);
const __m256d kLogP5 = _mm256_set1_pd(7.70838733755885391666e0);
const __m256d kLogQ0 = _mm256_set1_pd(1.12873587189167450590e1);
const __m256d kLogQ1 = _mm256_set1_pd(4.52279145837532221105e1);
const __m256d kLogQ2 = _mm256_set1_pd(8.29875266912776603211e1);
const __m256d kLogQ3 = _mm256_set1_pd(7.11544750618563894466e1);
const __m256d kLogQ4 = _mm256_set1_pd(2.31251620126765340583e1);

inline __m256d log_core(__m256d x) {
  const __m256d orig = x;

  // split x = m * 2^e with m in [0.5, 1)
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i expo = _mm256_srli_epi64(bits, 52);
  const __m256i mant =
      _mm256_or_si256(_mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL)),
                      _mm256_set1_epi64x(0x3FE0000000000000LL));
  __m256d m = _mm256_castsi256_pd(mant);

  // exponent (unbiased so that m in [0.5,1)) as double, via int32 lanes
  const __m256i lo32 = _mm256_permutevar8x32_epi32(expo, _mm256_setr_epi32(0, 2, 4, 6, 0, 0, 0, 0));
  __m256d e = _mm256_cvtepi32_pd(_mm256_castsi256_si128(lo32));
  e = _mm256_sub_pd(e, _mm256_set1_pd(1022.0));

  // if m < sqrt(1/2): m = 2m, e -= 1; reduce y = m - 1
  const __m256d small = _mm256_cmp_pd(m, kSqrtHalf, _CMP_LT_OQ);
  m = _mm256_blendv_pd(m, _mm256_add_pd(m, m), small);
  e = _mm256_blendv_pd(e, _mm256_sub_pd(e, kOne), small);
  const __m256d y = _mm256_sub_pd(m, kOne);
  const __m256d z = _mm256_mul_pd(y, y);

  __m256d p = _mm256_fmadd_pd(kLogP0, y, kLogP1);
  p = _mm256_fmadd_pd(p, y, kLogP2);
  p = _mm256_fmadd_pd(p, y, kLogP3);
  p = _mm256_fmadd_pd(p, y, kLogP4);
  p = _mm256_fmadd_pd(p, y, kLogP5);
  __m256d q = _mm256_add_pd(y, kLogQ0);
  q = _mm256_fmadd_pd(q, y, kLogQ1);
  q = _mm256_fmadd_pd(q, y, kLogQ2);
  q = _mm256_fmadd_pd(q, y, kLogQ3);
  q = _mm256_fmadd_pd(q, y, kLogQ4);

  __m256d r = _mm256_div_pd(_mm256_mul_pd(_mm256_mul_pd(y, z), p), q);
  r = _mm256_fnmadd_pd(e, _mm256_set1_pd(2.121944400546905827679e-4), r);
  r = _mm256_fnmadd_pd(kHalf, z, r);
  r = _mm256_add_pd(r, y);
  r = _mm256_fmadd_pd(e, _mm256_set1_pd(0.693359375), r);

  // x <= 0 -> NaN, +inf -> +inf, NaN -> NaN
  const __m256d nonpos = _mm256_cmp_pd(orig, kZero, _CMP_LE_OQ);
  r = _mm256_blendv_pd(r, _mm256_set1_pd(NAN), nonpos);
  const __m256d isinf = _mm256_cmp_pd(orig, kInf, _CMP_EQ_OQ);
  r = _mm256_blendv_pd(r, kInf, isinf);
  r = _mm256_blendv_pd(r, orig, _mm256_cmp_pd(orig, orig, _CMP_UNORD_Q));
  return r;
}

// ---------------------------------------------------------------------------
// array wrappers (scalar tail matches the reference implementation)
// ---------------------------------------------------------------------------

void exp_n_avx2(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, exp_core(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = std::exp(x[i]);
}

void log_n_avx2(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, log_core(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = std::log(x[i]);
}

void logistic_n_avx2(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = exp_core(_mm256_sub_pd(kZero, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, _mm256_div_pd(kOne, _mm256_add_pd(kOne, t)));
  }
  for (; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void shift_scale_add_n_avx2(double base, const double* xi0, double s, const double* xi1,
                            double* theta, std::size_t n) {
  const __m256d vb = _mm256_set1_pd(base);
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_fmadd_pd(vs, _mm256_loadu_pd(xi1 + i),
                                      _mm256_add_pd(vb, _mm256_loadu_pd(xi0 + i)));
    _mm256_storeu_pd(theta + i, t);
  }
  for (; i < n; ++i) theta[i] = base + xi0[i] + s * xi1[i];
}

void shift_n_avx2(double base, const double* xi0, double* theta, std::size_t n) {
  const __m256d vb = _mm256_set1_pd(base);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(theta + i, _mm256_add_pd(vb, _mm256_loadu_pd(xi0 + i)));
  for (; i < n; ++i) theta[i] = base + xi0[i];
}

}  // namespace

const Ops* avx2_ops_table() {
  static const Ops table{exp_n_avx2, log_n_avx2, logistic_n_avx2, shift_scale_add_n_avx2,
                         shift_n_avx2, "avx2"};
  return &table;
}

}  // namespace irtmix::kern

#else

namespace irtmix::kern {
const Ops* avx2_ops_table() { return nullptr; }
}  // namespace irtmix::kern

#endif  // IRTMIX_HAVE_AVX2
