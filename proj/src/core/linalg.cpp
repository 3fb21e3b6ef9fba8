#include <cmath>

#include "aglr/linalg.hpp"
#include "aglr/simd.hpp"

namespace aglr::linalg {

bool cholesky_lower(std::span<double> a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double* row_j = a.data() + j * n;
    const double diag = row_j[j] - simd::dot(row_j, row_j, j);
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double ljj = std::sqrt(diag);
    row_j[j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double* row_i = a.data() + i * n;
      row_i[j] = (row_i[j] - simd::dot(row_i, row_j, j)) / ljj;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
  }
  return true;
}

double log_det_from_cholesky(std::span<const double> l, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::log(l[i * n + i]);
  return 2.0 * acc;
}

void invert_lower(std::span<const double> l, std::span<double> out, std::size_t n) {
  // Column-by-column forward substitution of L X = I.
  for (std::size_t i = 0; i < n * n; ++i) out[i] = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = c; i < n; ++i) {
      double acc = (i == c) ? 1.0 : 0.0;
      for (std::size_t k = c; k < i; ++k) acc -= l[i * n + k] * out[k * n + c];
      out[i * n + c] = acc / l[i * n + i];
    }
  }
}

void lower_matvec(std::span<const double> l, std::span<const double> x, std::span<double> y,
                  std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = simd::dot(l.data() + i * n, x.data(), i + 1);
}

double lower_matvec_sqnorm(std::span<const double> l, std::span<const double> x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = simd::dot(l.data() + i * n, x.data(), i + 1);
    acc += v * v;
  }
  return acc;
}

}  // namespace aglr::linalg
