#pragma once

#include <cstddef>
#include <span>

// Small dense routines on row-major n x n double matrices.
namespace aglr::linalg {

// In-place lower Cholesky factor; the strict upper triangle is zeroed.
// Returns false when the matrix is not numerically positive definite.
bool cholesky_lower(std::span<double> a, std::size_t n);

double log_det_from_cholesky(std::span<const double> l, std::size_t n);

// out = L^{-1} for lower-triangular L (out is lower-triangular too).
void invert_lower(std::span<const double> l, std::span<double> out, std::size_t n);

// y = L x for lower-triangular L.
void lower_matvec(std::span<const double> l, std::span<const double> x, std::span<double> y,
                  std::size_t n);

// Squared norm of L x for lower-triangular L, without materializing L x.
double lower_matvec_sqnorm(std::span<const double> l, std::span<const double> x, std::size_t n);

}  // namespace aglr::linalg
