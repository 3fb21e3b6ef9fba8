#include "aglr/simd.hpp"

namespace aglr::simd {

namespace {

float dot_f32(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sqdist_f64(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double tri_sqnorm_f64(const double* l, const double* x, double* work, std::size_t d) {
  for (std::size_t r = 0; r < d; ++r) work[r] = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double* col = l + j * d;
    for (std::size_t r = j; r < d; ++r) work[r] += col[r] * x[j];
  }
  double acc = 0.0;
  for (std::size_t r = 0; r < d; ++r) acc += work[r] * work[r];
  return acc;
}

void syrk_lower_f64(double* a, const double* x, const double* w, std::size_t m, std::size_t d) {
  for (std::size_t k = 0; k < m; ++k) {
    const double* xk = x + k * d;
    for (std::size_t r = 0; r < d; ++r) {
      const double coef = w[k] * xk[r];
      double* row = a + r * d;
      for (std::size_t s = 0; s <= r; ++s) row[s] += coef * xk[s];
    }
  }
}

constexpr KernelTable kScalar{Backend::Scalar, dot_f32,   dot_f64,        axpy_f32,
                              axpy_f64,        sqdist_f64, tri_sqnorm_f64, syrk_lower_f64};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace aglr::simd
