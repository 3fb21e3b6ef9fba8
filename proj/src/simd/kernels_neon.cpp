#include <arm_neon.h>

#include "aglr/simd.hpp"

namespace aglr::simd {

namespace {

float dot_f32(const float* a, const float* b, std::size_t n) {
  float32x4_t acc0 = vdupq_n_f32(0.0f);
  float32x4_t acc1 = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
  float acc = vaddvq_f32(vaddq_f32(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sqdist_f64(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    acc = vfmaq_f64(acc, d, d);
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double tri_sqnorm_f64(const double* l, const double* x, double* work, std::size_t d) {
  for (std::size_t r = 0; r < d; ++r) work[r] = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double* col = l + j * d;
    const float64x2_t xj = vdupq_n_f64(x[j]);
    std::size_t r = j & ~std::size_t{1};
    for (; r + 2 <= d; r += 2) vst1q_f64(work + r, vfmaq_f64(vld1q_f64(work + r), vld1q_f64(col + r), xj));
    for (; r < d; ++r) work[r] += col[r] * x[j];
  }
  return dot_f64(work, work, d);
}

void syrk_lower_f64(double* a, const double* x, const double* w, std::size_t m, std::size_t d) {
  for (std::size_t r = 0; r < d; ++r) {
    double* row = a + r * d;
    std::size_t s = 0;
    for (; s + 2 <= r + 1; s += 2) {
      float64x2_t acc = vld1q_f64(row + s);
      for (std::size_t k = 0; k < m; ++k) {
        const double* xk = x + k * d;
        acc = vfmaq_f64(acc, vdupq_n_f64(w[k] * xk[r]), vld1q_f64(xk + s));
      }
      vst1q_f64(row + s, acc);
    }
    for (; s <= r; ++s) {
      double acc = row[s];
      for (std::size_t k = 0; k < m; ++k) acc += w[k] * x[k * d + r] * x[k * d + s];
      row[s] = acc;
    }
  }
}

constexpr KernelTable kNeon{Backend::Neon, dot_f32,   dot_f64,        axpy_f32,
                            axpy_f64,      sqdist_f64, tri_sqnorm_f64, syrk_lower_f64};

}  // namespace

const KernelTable* neon_kernels() { return &kNeon; }

}  // namespace aglr::simd
