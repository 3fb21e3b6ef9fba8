#pragma once

// Vector kernels behind every arithmetic inner loop (MIL forward/backward,
// Gaussian log-densities, covariance accumulation). Each kernel has a scalar
// reference implementation and, where the build and the CPU allow it, an
// AVX2+FMA or NEON variant. The active variant is chosen once at startup:
// the AGLR_SIMD environment variable (scalar|avx2|neon|auto) overrides the
// CPU probe.

#include <cstddef>
#include <span>
#include <string_view>

namespace aglr::simd {

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  Backend backend;
  float (*dot_f32)(const float* a, const float* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy_f32)(float alpha, const float* x, float* y, std::size_t n);
  void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i (a_i - b_i)^2
  double (*sqdist_f64)(const double* a, const double* b, std::size_t n);
  // ||L x||^2 for lower-triangular d x d L stored column-major with explicit
  // zeros above the diagonal; `work` holds d scratch doubles.
  double (*tri_sqnorm_f64)(const double* l_colmajor, const double* x, double* work, std::size_t d);
  // Lower triangle of A (row-major d x d) += sum_k w_k x_k x_k^T over the m
  // rows of x.
  void (*syrk_lower_f64)(double* a, const double* x, const double* w, std::size_t m, std::size_t d);
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled into this build.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

bool backend_available(Backend backend);
const KernelTable& kernels_for(Backend backend);

// Active table. Switching is intended for tests and benchmarks; it is not
// synchronized with concurrent kernel calls.
const KernelTable& active();
void set_backend(Backend backend);
Backend active_backend();

std::string_view to_string(Backend backend);

inline float dot(std::span<const float> a, std::span<const float> b) {
  return active().dot_f32(a.data(), b.data(), a.size());
}
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot_f64(a.data(), b.data(), a.size());
}
inline float dot(const float* a, const float* b, std::size_t n) { return active().dot_f32(a, b, n); }
inline double dot(const double* a, const double* b, std::size_t n) { return active().dot_f64(a, b, n); }

inline void axpy(float alpha, const float* x, float* y, std::size_t n) {
  active().axpy_f32(alpha, x, y, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy_f64(alpha, x, y, n);
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().sqdist_f64(a.data(), b.data(), a.size());
}

inline double tri_sqnorm(const double* l_colmajor, const double* x, double* work, std::size_t d) {
  return active().tri_sqnorm_f64(l_colmajor, x, work, d);
}

inline void syrk_lower(double* a, const double* x, const double* w, std::size_t m, std::size_t d) {
  active().syrk_lower_f64(a, x, w, m, d);
}

}  // namespace aglr::simd
