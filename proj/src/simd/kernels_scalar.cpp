#include "persona/simd/kernels.hpp"

namespace persona::simd {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sqdist_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy2_scalar(double a, const double* x, double b, const double* z, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i] + b * z[i];
}

constexpr KernelTable kScalar{Backend::kScalar, "scalar", &dot_scalar, &sqdist_scalar, &axpy2_scalar};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace persona::simd
