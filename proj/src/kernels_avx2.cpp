#include <immintrin.h>

#include "bml/kernels.hpp"

namespace bml {

namespace {
double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v), hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}
}  // namespace

void weighted_gram_avx2(const SplitMatrix& p, const double* d, std::complex<double>* out) {
  const std::size_t n = p.rows, r = p.cols, n4 = n & ~std::size_t(3);
  for (std::size_t a = 0; a < r; ++a) {
    const double* ar = &p.re[a * n];
    const double* ai = &p.im[a * n];
    for (std::size_t b = a; b < r; ++b) {
      const double* br = &p.re[b * n];
      const double* bi = &p.im[b * n];
      __m256d vr = _mm256_setzero_pd(), vi = _mm256_setzero_pd();
      for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d dd = _mm256_loadu_pd(d + i);
        const __m256d xr = _mm256_mul_pd(dd, _mm256_loadu_pd(ar + i));
        const __m256d xi = _mm256_mul_pd(dd, _mm256_loadu_pd(ai + i));
        const __m256d yr = _mm256_loadu_pd(br + i), yi = _mm256_loadu_pd(bi + i);
        vr = _mm256_fmadd_pd(xr, yr, _mm256_fmadd_pd(xi, yi, vr));
        vi = _mm256_fmadd_pd(xr, yi, _mm256_fnmadd_pd(xi, yr, vi));
      }
      double sr = hsum(vr), si = hsum(vi);
      for (std::size_t i = n4; i < n; ++i) {
        sr += d[i] * (ar[i] * br[i] + ai[i] * bi[i]);
        si += d[i] * (ar[i] * bi[i] - ai[i] * br[i]);
      }
      out[a + b * r] = {sr, a == b ? 0.0 : si};
      out[b + a * r] = {sr, a == b ? 0.0 : -si};
    }
  }
}

}  // namespace bml
