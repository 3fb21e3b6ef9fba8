#include "aglr/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "aglr/error.hpp"
#include "aglr/linalg.hpp"
#include "aglr/simd.hpp"

namespace aglr {

namespace {

constexpr double kMinComponentMass = 1e-12;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

bool is_full(const GmmModel& m) { return m.cov_type == CovarianceType::Full; }

// Per-component quantities needed to evaluate log N(x | mu_k, Sigma_k):
// whitening factor (L^{-1} column-major for full, 1/sigma for diagonal) and
// the log of pi_k times the normalizing constant.
struct DensityCache {
  std::vector<double> whitening;
  std::vector<double> log_scale;
};

DensityCache build_cache(const GmmModel& model) {
  const auto d = static_cast<std::size_t>(model.dim);
  DensityCache cache;
  cache.log_scale.resize(model.k);
  if (is_full(model)) {
    cache.whitening.resize(model.k * d * d);
    std::vector<double> chol(d * d);
    std::vector<double> inverse(d * d);
    for (int c = 0; c < model.k; ++c) {
      auto cov = model.covariance(c);
      std::copy(cov.begin(), cov.end(), chol.begin());
      if (!linalg::cholesky_lower(chol, d)) {
        throw DegenerateComponentError(c, "component " + std::to_string(c) +
                                              " covariance is not positive definite");
      }
      linalg::invert_lower(chol, inverse, d);
      // Column-major copy for the triangular kernel.
      double* w = cache.whitening.data() + c * d * d;
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t j = 0; j < d; ++j) w[j * d + r] = inverse[r * d + j];
      }
      const double log_det = linalg::log_det_from_cholesky(chol, d);
      cache.log_scale[c] = std::log(model.weights[c]) - 0.5 * (static_cast<double>(d) * kLog2Pi + log_det);
    }
  } else {
    cache.whitening.resize(model.k * d);
    for (int c = 0; c < model.k; ++c) {
      auto var = model.covariance(c);
      double log_det = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        if (!(var[j] > 0.0)) {
          throw DegenerateComponentError(c, "component " + std::to_string(c) +
                                                " has a non-positive variance");
        }
        cache.whitening[c * d + j] = 1.0 / std::sqrt(var[j]);
        log_det += std::log(var[j]);
      }
      cache.log_scale[c] = std::log(model.weights[c]) - 0.5 * (static_cast<double>(d) * kLog2Pi + log_det);
    }
  }
  return cache;
}

// Returns sum_i log p(x_i); when `resp` is non-null it receives the N x K
// responsibilities, normalized per row by log-sum-exp.
double expectation(const MatrixD& samples, const GmmModel& model, MatrixD* resp) {
  const auto d = static_cast<std::size_t>(model.dim);
  const auto k = static_cast<std::size_t>(model.k);
  const auto n = samples.rows();
  const DensityCache cache = build_cache(model);
  MatrixD local;
  MatrixD& log_joint = resp ? *resp : local;
  log_joint = MatrixD(n, k);
  std::vector<double> diff(d);
  std::vector<double> work(d);
  // Component-major so each whitening factor stays cache resident.
  for (std::size_t c = 0; c < k; ++c) {
    const auto mu = model.means.row(c);
    const double* w = cache.whitening.data() + c * (is_full(model) ? d * d : d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = samples.row(i);
      for (std::size_t j = 0; j < d; ++j) diff[j] = x[j] - mu[j];
      double maha;
      if (is_full(model)) {
        maha = simd::tri_sqnorm(w, diff.data(), work.data(), d);
      } else {
        for (std::size_t j = 0; j < d; ++j) diff[j] *= w[j];
        maha = simd::dot(diff.data(), diff.data(), d);
      }
      log_joint(i, c) = cache.log_scale[c] - 0.5 * maha;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = log_joint.row(i);
    const double peak = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - peak);
    const double lse = peak + std::log(sum);
    total += lse;
    if (resp) {
      for (auto& v : row) v = std::exp(v - lse);
    }
  }
  return total;
}

GmmModel maximization(const MatrixD& samples, const MatrixD& resp, const GmmModel& shape,
                      double regularizer) {
  const auto n = samples.rows();
  const auto d = static_cast<std::size_t>(shape.dim);
  const auto k = static_cast<std::size_t>(shape.k);

  GmmModel out;
  out.k = shape.k;
  out.dim = shape.dim;
  out.cov_type = shape.cov_type;
  out.weights.assign(k, 0.0);
  out.means = MatrixD(k, d);
  out.covariances.assign(k * out.covariance_stride(), 0.0);

  constexpr std::size_t kBlock = 16;
  std::vector<double> block(kBlock * d);
  std::vector<double> block_weights(kBlock);
  for (std::size_t c = 0; c < k; ++c) {
    double mass = 0.0;
    auto mu = out.means.row(c);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = resp(i, c);
      mass += g;
      simd::axpy(g, samples.row(i).data(), mu.data(), d);
    }
    if (mass < kMinComponentMass) {
      throw DegenerateComponentError(static_cast<int>(c),
                                     "component " + std::to_string(c) + " lost all responsibility mass");
    }
    for (auto& v : mu) v /= mass;
    out.weights[c] = mass / static_cast<double>(n);

    auto cov = out.covariance(static_cast<int>(c));
    std::size_t pending = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = resp(i, c);
      if (g == 0.0) continue;
      const auto x = samples.row(i);
      if (is_full(out)) {
        // Lower triangle only, accumulated kBlock samples at a time; mirrored below.
        double* row = block.data() + pending * d;
        for (std::size_t j = 0; j < d; ++j) row[j] = x[j] - mu[j];
        block_weights[pending] = g;
        if (++pending == kBlock) {
          simd::syrk_lower(cov.data(), block.data(), block_weights.data(), pending, d);
          pending = 0;
        }
      } else {
        for (std::size_t j = 0; j < d; ++j) {
          const double dj = x[j] - mu[j];
          cov[j] += g * dj * dj;
        }
      }
    }
    if (pending > 0) simd::syrk_lower(cov.data(), block.data(), block_weights.data(), pending, d);
    if (is_full(out)) {
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t s = 0; s <= r; ++s) {
          const double v = cov[r * d + s] / mass;
          cov[r * d + s] = v;
          cov[s * d + r] = v;
        }
        cov[r * d + r] += regularizer;
      }
    } else {
      for (std::size_t j = 0; j < d; ++j) cov[j] = cov[j] / mass + regularizer;
    }
  }
  // Renormalize so the simplex holds to rounding regardless of N.
  double total = 0.0;
  for (double w : out.weights) total += w;
  for (double& w : out.weights) w /= total;
  return out;
}

void check_samples(const MatrixD& samples, int dim) {
  if (static_cast<int>(samples.cols()) != dim) {
    throw Error(ErrorCode::DimensionMismatch, "samples have " + std::to_string(samples.cols()) +
                                                  " columns, model has dim " + std::to_string(dim));
  }
}

// Covariance of the whole sample set plus regularization, used as the
// starting spread of every component and when re-seeding a collapsed one.
std::vector<double> global_covariance(const MatrixD& samples, CovarianceType type, double regularizer) {
  const auto n = samples.rows();
  const auto d = samples.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) simd::axpy(1.0, samples.row(i).data(), mean.data(), d);
  for (auto& v : mean) v /= static_cast<double>(n);

  const bool full = type == CovarianceType::Full;
  std::vector<double> cov(full ? d * d : d, 0.0);
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = samples.row(i);
    for (std::size_t j = 0; j < d; ++j) diff[j] = x[j] - mean[j];
    if (full) {
      for (std::size_t r = 0; r < d; ++r) simd::axpy(diff[r], diff.data(), cov.data() + r * d, d);
    } else {
      for (std::size_t j = 0; j < d; ++j) cov[j] += diff[j] * diff[j];
    }
  }
  for (auto& v : cov) v /= static_cast<double>(n);

  double floor = regularizer;
  double trace = 0.0;
  for (std::size_t j = 0; j < d; ++j) trace += full ? cov[j * d + j] : cov[j];
  const double bump = std::max(1e-6, 1e-6 * trace / static_cast<double>(d));
  for (int attempt = 0; attempt < 12; ++attempt) {
    std::vector<double> trial = cov;
    for (std::size_t j = 0; j < d; ++j) (full ? trial[j * d + j] : trial[j]) += floor;
    if (!full) {
      if (std::all_of(trial.begin(), trial.end(), [](double v) { return v > 0.0; })) return trial;
    } else {
      std::vector<double> chol = trial;
      if (linalg::cholesky_lower(chol, d)) return trial;
    }
    floor = floor == 0.0 ? bump : floor * 10.0;
    floor = std::max(floor, bump);
  }
  throw Error(ErrorCode::DegenerateComponent, "sample covariance cannot be regularized");
}

GmmModel kmeanspp_init(const MatrixD& samples, int k, const EmConfig& config,
                       const std::vector<double>& start_cov, RngStream& rng) {
  const auto n = samples.rows();
  const auto d = samples.cols();

  std::vector<std::size_t> centers;
  centers.reserve(k);
  centers.push_back(static_cast<std::size_t>(rng.index(n)));
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    const auto last = samples.row(centers.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], simd::squared_distance(samples.row(i), last));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > target && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.index(n));
    }
    centers.push_back(pick);
  }

  // One assignment pass turns seeds into cluster means and weights.
  MatrixD sums(k, d);
  std::vector<double> counts(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double dist = simd::squared_distance(samples.row(i), samples.row(centers[c]));
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<std::size_t>(c);
      }
    }
    simd::axpy(1.0, samples.row(i).data(), sums.row(best).data(), d);
    counts[best] += 1.0;
  }

  GmmModel model;
  model.k = k;
  model.dim = static_cast<int>(d);
  model.cov_type = config.cov_type;
  model.means = MatrixD(k, d);
  model.weights.resize(k);
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    auto mu = model.means.row(c);
    if (counts[c] > 0.0) {
      for (std::size_t j = 0; j < d; ++j) mu[j] = sums(c, j) / counts[c];
    } else {
      const auto seed = samples.row(centers[c]);
      std::copy(seed.begin(), seed.end(), mu.begin());
    }
    model.weights[c] = std::max(counts[c], 1.0) / static_cast<double>(n);
    total += model.weights[c];
  }
  for (double& w : model.weights) w /= total;
  for (int c = 0; c < k; ++c) model.covariances.insert(model.covariances.end(), start_cov.begin(), start_cov.end());
  return model;
}

void reseed_component(GmmModel& model, int component, const MatrixD& samples,
                      const std::vector<double>& start_cov, RngStream& rng) {
  const auto seed = samples.row(static_cast<std::size_t>(rng.index(samples.rows())));
  auto mu = model.means.row(component);
  std::copy(seed.begin(), seed.end(), mu.begin());
  auto cov = model.covariance(component);
  std::copy(start_cov.begin(), start_cov.end(), cov.begin());
  model.weights[component] = 1.0 / model.k;
  double total = 0.0;
  for (double w : model.weights) total += w;
  for (double& w : model.weights) w /= total;
}

GmmModel run_em(const MatrixD& samples, int k, const EmConfig& config, RngStream rng) {
  const auto n = static_cast<double>(samples.rows());
  const auto start_cov = global_covariance(samples, config.cov_type, config.covariance_regularizer);
  GmmModel model = kmeanspp_init(samples, k, config, start_cov, rng);

  std::vector<double> trace;
  std::vector<int> reseeded;
  bool converged = false;
  int updates = 0;
  int reseeds = 0;
  const int max_reseeds = 10 * k;
  MatrixD resp;
  double ll = 0.0;
  bool evaluated = false;

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    try {
      ll = expectation(samples, model, &resp);
    } catch (const DegenerateComponentError& e) {
      if (++reseeds > max_reseeds) break;
      reseed_component(model, e.component(), samples, start_cov, rng);
      reseeded.push_back(static_cast<int>(trace.size()));
      continue;
    }
    const bool fresh_segment = !reseeded.empty() && reseeded.back() == static_cast<int>(trace.size());
    if (!trace.empty() && !fresh_segment && std::abs(ll - trace.back()) / n < config.tolerance) {
      trace.push_back(ll);
      converged = true;
      evaluated = true;
      break;
    }
    trace.push_back(ll);
    try {
      model = maximization(samples, resp, model, config.covariance_regularizer);
      ++updates;
      evaluated = false;
    } catch (const DegenerateComponentError& e) {
      if (++reseeds > max_reseeds) {
        evaluated = true;
        break;
      }
      reseed_component(model, e.component(), samples, start_cov, rng);
      reseeded.push_back(static_cast<int>(trace.size()));
      evaluated = false;
    }
  }
  if (!evaluated) {
    try {
      ll = expectation(samples, model, nullptr);
      trace.push_back(ll);
    } catch (const DegenerateComponentError&) {
      ll = -std::numeric_limits<double>::infinity();
    }
  }

  model.final_log_likelihood = ll;
  model.iterations_used = updates;
  model.converged = converged;
  model.log_likelihood_trace = std::move(trace);
  model.reseeded_at = std::move(reseeded);
  model.bic = -2.0 * ll + static_cast<double>(free_parameter_count(k, model.dim, model.cov_type)) * std::log(n);
  return model;
}

}  // namespace

void EmConfig::validate() const {
  if (max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "max_iterations must be >= 1");
  if (!(tolerance > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be > 0");
  if (!(covariance_regularizer >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "covariance_regularizer must be >= 0");
  }
  if (n_init < 1) throw Error(ErrorCode::InvalidArgument, "n_init must be >= 1");
}

std::size_t GmmModel::covariance_stride() const {
  const auto d = static_cast<std::size_t>(dim);
  return cov_type == CovarianceType::Full ? d * d : d;
}

std::span<const double> GmmModel::covariance(int component) const {
  const auto stride = covariance_stride();
  return std::span<const double>(covariances).subspan(component * stride, stride);
}

std::span<double> GmmModel::covariance(int component) {
  const auto stride = covariance_stride();
  return std::span<double>(covariances).subspan(component * stride, stride);
}

void GmmModel::validate() const {
  if (k < 1 || dim < 1) throw Error(ErrorCode::InvalidArgument, "mixture needs k >= 1 and dim >= 1");
  if (weights.size() != static_cast<std::size_t>(k) || means.rows() != static_cast<std::size_t>(k) ||
      means.cols() != static_cast<std::size_t>(dim) || covariances.size() != k * covariance_stride()) {
    throw Error(ErrorCode::DimensionMismatch, "mixture parameter arrays have inconsistent shapes");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative mixing weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "mixing weights do not sum to 1");
  build_cache(*this);
}

std::size_t free_parameter_count(int k, int dim, CovarianceType cov_type) {
  const auto kk = static_cast<std::size_t>(k);
  const auto d = static_cast<std::size_t>(dim);
  const std::size_t cov = cov_type == CovarianceType::Full ? kk * d * (d + 1) / 2 : kk * d;
  return (kk - 1) + kk * d + cov;
}

MatrixD responsibilities(const MatrixD& samples, const GmmModel& model) {
  check_samples(samples, model.dim);
  MatrixD resp;
  expectation(samples, model, &resp);
  return resp;
}

double log_likelihood(const MatrixD& samples, const GmmModel& model) {
  check_samples(samples, model.dim);
  return expectation(samples, model, nullptr);
}

GmmModel em_step(const MatrixD& samples, const GmmModel& model, double covariance_regularizer) {
  check_samples(samples, model.dim);
  MatrixD resp;
  expectation(samples, model, &resp);
  GmmModel out = maximization(samples, resp, model, covariance_regularizer);
  out.final_log_likelihood = expectation(samples, out, nullptr);
  out.iterations_used = model.iterations_used + 1;
  out.bic = bic(out, samples);
  return out;
}

GmmModel fit_em(const MatrixD& samples, int k, const EmConfig& config, const RngStream& rng) {
  config.validate();
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "component count must be >= 1");
  if (samples.rows() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewSamples, std::to_string(samples.rows()) + " samples cannot support " +
                                              std::to_string(k) + " components");
  }
  if (samples.cols() == 0) throw Error(ErrorCode::DimensionMismatch, "samples have zero columns");
  GmmModel best;
  bool have_best = false;
  for (int r = 0; r < config.n_init; ++r) {
    GmmModel candidate = run_em(samples, k, config, rng.child("restart" + std::to_string(r)));
    if (!have_best || candidate.final_log_likelihood > best.final_log_likelihood) {
      best = std::move(candidate);
      have_best = true;
    }
  }
  return best;
}

double bic(const GmmModel& model, const MatrixD& samples) {
  const double ll = log_likelihood(samples, model);
  const auto p = static_cast<double>(free_parameter_count(model.k, model.dim, model.cov_type));
  return -2.0 * ll + p * std::log(static_cast<double>(samples.rows()));
}

GmmModel select_k(const MatrixD& samples, std::span<const int> candidates, const EmConfig& config,
                  const RngStream& rng) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "no component-count candidates");
  std::vector<int> feasible;
  for (int k : candidates) {
    if (k >= 1 && static_cast<std::size_t>(k) <= samples.rows()) feasible.push_back(k);
  }
  if (feasible.empty()) {
    throw Error(ErrorCode::TooFewSamples,
                std::to_string(samples.rows()) + " samples are fewer than every candidate K");
  }
  std::sort(feasible.begin(), feasible.end());
  feasible.erase(std::unique(feasible.begin(), feasible.end()), feasible.end());

  GmmModel best;
  bool have_best = false;
  for (int k : feasible) {
    GmmModel m = fit_em(samples, k, config, rng.child("k" + std::to_string(k)));
    if (!have_best || m.bic < best.bic) {
      best = std::move(m);
      have_best = true;
    }
  }
  return best;
}

MatrixD sample_embeddings(const GmmModel& model, std::size_t count, RngStream& rng) {
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be >= 1");
  const auto d = static_cast<std::size_t>(model.dim);
  std::vector<double> factors;
  if (is_full(model)) {
    factors = model.covariances;
    for (int c = 0; c < model.k; ++c) {
      if (!linalg::cholesky_lower(std::span(factors).subspan(c * d * d, d * d), d)) {
        throw DegenerateComponentError(c, "component " + std::to_string(c) +
                                              " covariance is not positive definite");
      }
    }
  } else {
    factors.resize(model.covariances.size());
    for (std::size_t i = 0; i < factors.size(); ++i) factors[i] = std::sqrt(model.covariances[i]);
  }

  MatrixD out(count, d);
  std::vector<double> z(d);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = rng.uniform();
    int component = model.k - 1;
    double acc = 0.0;
    for (int c = 0; c < model.k; ++c) {
      acc += model.weights[c];
      if (u < acc) {
        component = c;
        break;
      }
    }
    for (auto& v : z) v = rng.normal();
    auto x = out.row(i);
    const auto mu = model.means.row(component);
    if (is_full(model)) {
      linalg::lower_matvec(std::span<const double>(factors).subspan(component * d * d, d * d), z, x, d);
    } else {
      const double* s = factors.data() + component * d;
      for (std::size_t j = 0; j < d; ++j) x[j] = s[j] * z[j];
    }
    for (std::size_t j = 0; j < d; ++j) x[j] += mu[j];
  }
  return out;
}

GmmModel fit_count_model(std::span<const int> counts, std::span<const int> candidates,
                         const EmConfig& config, const RngStream& rng) {
  if (counts.empty()) throw Error(ErrorCode::TooFewSamples, "no patch counts to fit");
  MatrixD samples(counts.size(), 1);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 1) throw Error(ErrorCode::InvalidArgument, "patch counts must be >= 1");
    samples(i, 0) = std::log(static_cast<double>(counts[i]));
  }
  return select_k(samples, candidates, config, rng);
}

int sample_count(const GmmModel& model, RngStream& rng) {
  if (model.dim != 1) throw Error(ErrorCode::DimensionMismatch, "count model must be one-dimensional");
  const double x = sample_embeddings(model, 1, rng)(0, 0);
  // Beyond ~2^30 patches the value is meaningless; clamp before rounding.
  const double value = std::exp(std::min(x, 30.0 * std::numbers::ln2));
  return std::max(1, static_cast<int>(std::lround(value)));
}

}  // namespace aglr
