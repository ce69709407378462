#include <atomic>
#include <cstdlib>
#include <string>

#include "persona/error.hpp"
#include "persona/simd/kernels.hpp"

namespace persona::simd {

namespace {

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return &scalar_kernels();
    case Backend::kAvx2:
      return avx2_kernels();
    case Backend::kNeon:
      return neon_kernels();
  }
  return nullptr;
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("PERSONA_SIMD"); env && *env) {
    const Backend b = parse_backend(env);
    if (!cpu_supports(b) || !table_for(b)) {
      throw UsageError(std::string("PERSONA_SIMD=") + env + " is not available on this machine");
    }
    return table_for(b);
  }
  for (Backend b : {Backend::kAvx2, Backend::kNeon}) {
    if (table_for(b) && cpu_supports(b)) return table_for(b);
  }
  return &scalar_kernels();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

bool cpu_supports(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::kScalar, Backend::kAvx2, Backend::kNeon}) {
    if (table_for(b) && cpu_supports(b)) out.push_back(b);
  }
  return out;
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "?";
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::kScalar;
  if (name == "avx2") return Backend::kAvx2;
  if (name == "neon") return Backend::kNeon;
  throw UsageError("unknown SIMD backend '" + std::string(name) + "' (valid: scalar, avx2, neon)");
}

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (!t) {
    const KernelTable* chosen = pick_default();
    const KernelTable* expected = nullptr;
    g_active.compare_exchange_strong(expected, chosen, std::memory_order_acq_rel);
    t = g_active.load(std::memory_order_acquire);
  }
  return *t;
}

void set_active(Backend b) {
  const KernelTable* t = table_for(b);
  if (!t || !cpu_supports(b)) {
    throw UsageError("SIMD backend '" + std::string(backend_name(b)) + "' is not available on this machine");
  }
  g_active.store(t, std::memory_order_release);
}

}  // namespace persona::simd
