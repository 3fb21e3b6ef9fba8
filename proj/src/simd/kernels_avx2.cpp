// Compiled with -mavx2 -mfma; only reached after a CPU feature probe.
#include <immintrin.h>

#include <algorithm>

#include "aglr/simd.hpp"

namespace aglr::simd {

namespace {

inline float hsum(__m256 v) {
  const __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 0x55));
  return _mm_cvtss_f32(s);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d s = _mm_add_pd(lo, hi);
  s = _mm_add_sd(s, _mm_unpackhi_pd(s, s));
  return _mm_cvtsd_f64(s);
}

float dot_f32(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  __m256 acc2 = _mm256_setzero_ps();
  __m256 acc3 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    acc2 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 16), _mm256_loadu_ps(b + i + 16), acc2);
    acc3 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 24), _mm256_loadu_ps(b + i + 24), acc3);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float acc = hsum(_mm256_add_ps(_mm256_add_ps(acc0, acc1), _mm256_add_ps(acc2, acc3)));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sqdist_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// Rows r0 .. r0 + 4*NB - 1 of L x, accumulated in registers.
template <int NB>
double tri_rows_sqnorm(const double* l, const double* x, std::size_t d, std::size_t r0) {
  __m256d acc[NB];
  for (int b = 0; b < NB; ++b) acc[b] = _mm256_setzero_pd();
  const std::size_t jmax = std::min(d, r0 + 4 * NB);
  for (std::size_t j = 0; j < jmax; ++j) {
    const __m256d xj = _mm256_set1_pd(x[j]);
    const double* col = l + j * d + r0;
    for (int b = 0; b < NB; ++b) acc[b] = _mm256_fmadd_pd(_mm256_loadu_pd(col + 4 * b), xj, acc[b]);
  }
  __m256d sq = _mm256_setzero_pd();
  for (int b = 0; b < NB; ++b) sq = _mm256_fmadd_pd(acc[b], acc[b], sq);
  return hsum(sq);
}

double tri_sqnorm_f64(const double* l, const double* x, double* /*work*/, std::size_t d) {
  double total = 0.0;
  std::size_t r0 = 0;
  while (r0 + 4 <= d) {
    switch (std::min<std::size_t>(8, (d - r0) / 4)) {
      case 8: total += tri_rows_sqnorm<8>(l, x, d, r0); r0 += 32; break;
      case 7: total += tri_rows_sqnorm<7>(l, x, d, r0); r0 += 28; break;
      case 6: total += tri_rows_sqnorm<6>(l, x, d, r0); r0 += 24; break;
      case 5: total += tri_rows_sqnorm<5>(l, x, d, r0); r0 += 20; break;
      case 4: total += tri_rows_sqnorm<4>(l, x, d, r0); r0 += 16; break;
      case 3: total += tri_rows_sqnorm<3>(l, x, d, r0); r0 += 12; break;
      case 2: total += tri_rows_sqnorm<2>(l, x, d, r0); r0 += 8; break;
      default: total += tri_rows_sqnorm<1>(l, x, d, r0); r0 += 4; break;
    }
  }
  for (std::size_t r = r0; r < d; ++r) {
    double y = 0.0;
    for (std::size_t j = 0; j <= r; ++j) y += l[j * d + r] * x[j];
    total += y * y;
  }
  return total;
}

// Rows are processed in blocks of four columns so each accumulator stays in a
// register across the m samples; blocks never cross the diagonal.
void syrk_lower_f64(double* a, const double* x, const double* w, std::size_t m, std::size_t d) {
  for (std::size_t r = 0; r < d; ++r) {
    double* row = a + r * d;
    std::size_t s = 0;
    for (; s + 8 <= r + 1; s += 8) {
      __m256d acc0 = _mm256_loadu_pd(row + s);
      __m256d acc1 = _mm256_loadu_pd(row + s + 4);
      for (std::size_t k = 0; k < m; ++k) {
        const double* xk = x + k * d;
        const __m256d coef = _mm256_set1_pd(w[k] * xk[r]);
        acc0 = _mm256_fmadd_pd(coef, _mm256_loadu_pd(xk + s), acc0);
        acc1 = _mm256_fmadd_pd(coef, _mm256_loadu_pd(xk + s + 4), acc1);
      }
      _mm256_storeu_pd(row + s, acc0);
      _mm256_storeu_pd(row + s + 4, acc1);
    }
    for (; s + 4 <= r + 1; s += 4) {
      __m256d acc = _mm256_loadu_pd(row + s);
      for (std::size_t k = 0; k < m; ++k) {
        const double* xk = x + k * d;
        acc = _mm256_fmadd_pd(_mm256_set1_pd(w[k] * xk[r]), _mm256_loadu_pd(xk + s), acc);
      }
      _mm256_storeu_pd(row + s, acc);
    }
    for (; s <= r; ++s) {
      double acc = row[s];
      for (std::size_t k = 0; k < m; ++k) acc += w[k] * x[k * d + r] * x[k * d + s];
      row[s] = acc;
    }
  }
}

constexpr KernelTable kAvx2{Backend::Avx2, dot_f32,   dot_f64,        axpy_f32,
                            axpy_f64,      sqdist_f64, tri_sqnorm_f64, syrk_lower_f64};

}  // namespace

const KernelTable* avx2_kernels() { return &kAvx2; }

}  // namespace aglr::simd
