#pragma once

// Gaussian mixtures fitted by expectation-maximization, BIC-driven component
// selection, and ancestral sampling. Samples are N x dim double matrices; all
// accumulation happens in double precision.

#include <span>
#include <vector>

#include "aglr/matrix.hpp"
#include "aglr/rng.hpp"

namespace aglr {

enum class CovarianceType { Full, Diagonal };

struct EmConfig {
  CovarianceType cov_type = CovarianceType::Full;
  int max_iterations = 200;
  // Convergence threshold on the change of mean per-sample log-likelihood.
  double tolerance = 1e-4;
  double covariance_regularizer = 1e-6;
  int n_init = 3;

  void validate() const;
};

struct GmmModel {
  int k = 0;
  int dim = 0;
  CovarianceType cov_type = CovarianceType::Full;
  std::vector<double> weights;
  MatrixD means;                    // k x dim
  std::vector<double> covariances;  // k*dim*dim (full, row-major) or k*dim (diagonal)

  double final_log_likelihood = 0.0;
  double bic = 0.0;
  int iterations_used = 0;
  bool converged = false;
  // Total log-likelihood of the model after 0, 1, 2, ... EM updates.
  std::vector<double> log_likelihood_trace;
  // Trace indices at which a collapsed component was re-seeded; EM
  // monotonicity holds between consecutive entries.
  std::vector<int> reseeded_at;

  std::span<const double> covariance(int component) const;
  std::span<double> covariance(int component);
  std::size_t covariance_stride() const;

  void validate() const;
};

// Free parameters counted by BIC: mixing weights, means, covariances.
std::size_t free_parameter_count(int k, int dim, CovarianceType cov_type);

// Posterior component probabilities (N x K), evaluated in log space.
MatrixD responsibilities(const MatrixD& samples, const GmmModel& model);

// Total log-likelihood sum_i log p(x_i | model).
double log_likelihood(const MatrixD& samples, const GmmModel& model);

// One EM update (E-step on `model`, then closed-form M-step). Throws
// DegenerateComponentError when a component's responsibility mass drops
// below 1e-12 or its regularized covariance is not positive definite.
GmmModel em_step(const MatrixD& samples, const GmmModel& model, double covariance_regularizer);

// Best of config.n_init k-means++-seeded EM runs by final log-likelihood.
GmmModel fit_em(const MatrixD& samples, int k, const EmConfig& config, const RngStream& rng);

double bic(const GmmModel& model, const MatrixD& samples);

// Fits every candidate with K <= N and returns the minimum-BIC model; ties go
// to the smaller K. Throws TooFewSamples when no candidate is feasible.
GmmModel select_k(const MatrixD& samples, std::span<const int> candidates, const EmConfig& config,
                  const RngStream& rng);

MatrixD sample_embeddings(const GmmModel& model, std::size_t count, RngStream& rng);

// 1-D mixture over ln(count).
GmmModel fit_count_model(std::span<const int> counts, std::span<const int> candidates,
                         const EmConfig& config, const RngStream& rng);

// max(1, round(exp(x))) for one draw x of a count model.
int sample_count(const GmmModel& model, RngStream& rng);

}  // namespace aglr
