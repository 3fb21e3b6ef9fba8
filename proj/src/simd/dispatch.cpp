#include <atomic>
#include <cstdlib>
#include <string>

#include "aglr/error.hpp"
#include "aglr/simd.hpp"

namespace aglr::simd {

#ifndef AGLR_BUILD_AVX2
const KernelTable* avx2_kernels() { return nullptr; }
#endif
#ifndef AGLR_BUILD_NEON
const KernelTable* neon_kernels() { return nullptr; }
#endif

namespace {

bool cpu_has_avx2() {
#if defined(AGLR_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* select_initial() {
  const char* env = std::getenv("AGLR_SIMD");
  const std::string choice = env ? env : "auto";
  if (choice == "scalar") return &scalar_kernels();
  if (choice == "avx2" && backend_available(Backend::Avx2)) return avx2_kernels();
  if (choice == "neon" && backend_available(Backend::Neon)) return neon_kernels();
  if (backend_available(Backend::Avx2)) return avx2_kernels();
  if (backend_available(Backend::Neon)) return neon_kernels();
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{select_initial()};
  return slot;
}

}  // namespace

bool backend_available(Backend backend) {
  switch (backend) {
    case Backend::Scalar: return true;
    case Backend::Avx2: return avx2_kernels() != nullptr && cpu_has_avx2();
    // Advanced SIMD is mandatory on AArch64.
    case Backend::Neon: return neon_kernels() != nullptr;
  }
  return false;
}

const KernelTable& kernels_for(Backend backend) {
  if (!backend_available(backend)) {
    throw Error(ErrorCode::InvalidArgument,
                "SIMD backend " + std::string(to_string(backend)) + " unavailable");
  }
  switch (backend) {
    case Backend::Avx2: return *avx2_kernels();
    case Backend::Neon: return *neon_kernels();
    case Backend::Scalar: break;
  }
  return scalar_kernels();
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  active_slot().store(&kernels_for(backend), std::memory_order_relaxed);
}

Backend active_backend() { return active().backend; }

std::string_view to_string(Backend backend) {
  switch (backend) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

}  // namespace aglr::simd
