#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace bml {

// Split-complex column-major n x r block: column a occupies re[a*n .. a*n+n).
struct SplitMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> re, im;

  SplitMatrix() = default;
  SplitMatrix(std::size_t n, std::size_t r) : rows(n), cols(r), re(n * r, 0.0), im(n * r, 0.0) {}
  void set(std::size_t i, std::size_t a, std::complex<double> v) {
    re[a * rows + i] = v.real();
    im[a * rows + i] = v.imag();
  }
  std::complex<double> get(std::size_t i, std::size_t a) const { return {re[a * rows + i], im[a * rows + i]}; }
};

enum class KernelPath { Auto, Scalar, Avx2 };

bool avx2_available();
// Process-wide override used by equivalence tests and benchmarks.
void set_kernel_path(KernelPath p);
KernelPath active_kernel_path();

// out[a + b*r] = sum_i d[i] * conj(P(i,a)) * P(i,b); out is r x r hermitian, column-major.
void weighted_gram_scalar(const SplitMatrix& p, const double* d, std::complex<double>* out);
void weighted_gram_avx2(const SplitMatrix& p, const double* d, std::complex<double>* out);
void weighted_gram(const SplitMatrix& p, const double* d, std::complex<double>* out);

}  // namespace bml
