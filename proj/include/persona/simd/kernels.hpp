#pragma once

// Vector primitives behind the SVM kernel and gradient updates.
//
// Each backend is a table of plain function pointers. The scalar table is the
// reference; vector backends must agree with it to within floating-point
// reassociation error (see tests/unit/test_simd.cpp). Within one backend every
// reduction runs in a fixed order, so results are bitwise reproducible.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace persona::simd {

enum class Backend { kScalar, kAvx2, kNeon };

struct KernelTable {
  Backend backend;
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y[i] += a * x[i] + b * z[i]
  void (*axpy2)(double a, const double* x, double b, const double* z, double* y, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the backend was not compiled into this binary.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

bool cpu_supports(Backend b);
std::vector<Backend> available_backends();  // compiled in and supported by this CPU
std::string_view backend_name(Backend b);
Backend parse_backend(std::string_view name);  // throws UsageError

// Chosen on first use: PERSONA_SIMD=scalar|avx2|neon if set, else the widest
// supported backend.
const KernelTable& active();
void set_active(Backend b);  // throws UsageError if unavailable

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace persona::simd
