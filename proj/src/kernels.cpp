#include "bml/kernels.hpp"

#include <atomic>

namespace bml {

namespace {
std::atomic<KernelPath> g_path{KernelPath::Auto};
}

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

void set_kernel_path(KernelPath p) { g_path.store(p); }

KernelPath active_kernel_path() {
  KernelPath p = g_path.load();
  if (p == KernelPath::Auto) return avx2_available() ? KernelPath::Avx2 : KernelPath::Scalar;
  if (p == KernelPath::Avx2 && !avx2_available()) return KernelPath::Scalar;
  return p;
}

void weighted_gram_scalar(const SplitMatrix& p, const double* d, std::complex<double>* out) {
  const std::size_t n = p.rows, r = p.cols;
  for (std::size_t a = 0; a < r; ++a) {
    const double* ar = &p.re[a * n];
    const double* ai = &p.im[a * n];
    for (std::size_t b = a; b < r; ++b) {
      const double* br = &p.re[b * n];
      const double* bi = &p.im[b * n];
      double sr = 0, si = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sr += d[i] * (ar[i] * br[i] + ai[i] * bi[i]);
        si += d[i] * (ar[i] * bi[i] - ai[i] * br[i]);
      }
      out[a + b * r] = {sr, a == b ? 0.0 : si};
      out[b + a * r] = {sr, a == b ? 0.0 : -si};
    }
  }
}

void weighted_gram(const SplitMatrix& p, const double* d, std::complex<double>* out) {
  if (active_kernel_path() == KernelPath::Avx2)
    weighted_gram_avx2(p, d, out);
  else
    weighted_gram_scalar(p, d, out);
}

}  // namespace bml
