#include "aglr/synthetic.hpp"

#include <cmath>
#include <string>

namespace aglr {

namespace {

std::vector<double> random_direction(std::size_t d, RngStream& rng) {
  std::vector<double> v(d);
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

// Orthonormal basis (rows) from Gram-Schmidt on Gaussian vectors.
MatrixD random_orthonormal(std::size_t d, RngStream& rng) {
  MatrixD basis(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    for (;;) {
      auto v = random_direction(d, rng);
      for (std::size_t p = 0; p < r; ++p) {
        double proj = 0.0;
        for (std::size_t j = 0; j < d; ++j) proj += v[j] * basis(p, j);
        for (std::size_t j = 0; j < d; ++j) v[j] -= proj * basis(p, j);
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-6) continue;
      for (std::size_t j = 0; j < d; ++j) basis(r, j) = v[j] / norm;
      break;
    }
  }
  return basis;
}

// Q = B^T R(angle) B where R rotates coordinate pairs (0,1), (2,3), ... of the
// basis B. Every vector is rotated by exactly `angle`.
MatrixD plane_rotation(const MatrixD& basis, double angle) {
  const std::size_t d = basis.rows();
  MatrixD rotated_basis = basis;  // rows of R B
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (std::size_t p = 0; p + 1 < d; p += 2) {
    for (std::size_t j = 0; j < d; ++j) {
      const double a = basis(p, j);
      const double b = basis(p + 1, j);
      rotated_basis(p, j) = c * a - s * b;
      rotated_basis(p + 1, j) = s * a + c * b;
    }
  }
  MatrixD q(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < d; ++r) acc += basis(r, i) * rotated_basis(r, j);
      q(i, j) = acc;
    }
  }
  return q;
}

}  // namespace

void SyntheticDomainSpec::validate() const {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "dim must be >= 1");
  if (domains < 1) throw Error(ErrorCode::InvalidArgument, "domains must be >= 1");
  if (bags_per_class < 2) throw Error(ErrorCode::InvalidArgument, "bags_per_class must be >= 2");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "test_fraction must lie in (0, 1)");
  }
  if (min_bag < 1 || max_bag < min_bag) throw Error(ErrorCode::InvalidArgument, "need 1 <= min_bag <= max_bag");
  if (!(witness_rate > 0.0 && witness_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "witness_rate must lie in (0, 1]");
  }
  if (!(noise_scale >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_scale must be >= 0");
  if (!per_domain.empty() && per_domain.size() != static_cast<std::size_t>(domains)) {
    throw Error(ErrorCode::InvalidArgument, "per_domain must list every domain");
  }
}

DomainShift SyntheticDomainSpec::shift_of(int domain_id) const {
  if (!per_domain.empty()) return per_domain.at(static_cast<std::size_t>(domain_id - 1));
  DomainShift s;
  s.rotation = rotation_step * (domain_id - 1);
  s.shift = domain_id == 1 ? 0.0 : shift_scale;
  s.conflict = domain_id == 1 ? 0.0 : conflict;
  s.noise = noise_scale;
  return s;
}

std::vector<EpisodeDataset> generate_suite(const SyntheticDomainSpec& spec, const RngStream& rng) {
  spec.validate();
  const auto d = static_cast<std::size_t>(spec.dim);

  RngStream shared = rng.child("shared");
  auto background = random_direction(d, shared);
  for (auto& v : background) v *= spec.background_scale;
  auto signal = random_direction(d, shared);
  for (auto& v : signal) v *= spec.signal_strength;
  const MatrixD basis = random_orthonormal(d, shared);

  const int train_per_class =
      static_cast<int>(std::lround((1.0 - spec.test_fraction) * static_cast<double>(spec.bags_per_class)));

  std::vector<EpisodeDataset> episodes;
  for (int t = 1; t <= spec.domains; ++t) {
    const DomainShift shift = spec.shift_of(t);
    RngStream dom_rng = rng.child("domain" + std::to_string(t));
    const MatrixD rotation = plane_rotation(basis, shift.rotation);
    auto offset = random_direction(d, dom_rng);
    for (std::size_t j = 0; j < d; ++j) offset[j] = shift.shift * offset[j] + shift.conflict * signal[j];

    EpisodeDataset episode;
    episode.domain_id = t;
    std::vector<double> raw(d);
    for (int c = 0; c < 2; ++c) {
      RngStream class_rng = dom_rng.child("class" + std::to_string(c));
      for (int b = 0; b < spec.bags_per_class; ++b) {
        const auto n = static_cast<std::size_t>(
            spec.min_bag + static_cast<int>(class_rng.index(static_cast<std::uint64_t>(spec.max_bag - spec.min_bag + 1))));
        std::vector<char> witness(n, 0);
        if (c == 1) {
          const auto count = std::max<std::size_t>(
              1, static_cast<std::size_t>(std::lround(spec.witness_rate * static_cast<double>(n))));
          // Partial Fisher-Yates picks `count` distinct witness positions.
          std::vector<std::size_t> slots(n);
          for (std::size_t i = 0; i < n; ++i) slots[i] = i;
          for (std::size_t i = 0; i < count; ++i) {
            const auto j = i + static_cast<std::size_t>(class_rng.index(n - i));
            std::swap(slots[i], slots[j]);
            witness[slots[i]] = 1;
          }
        }
        FeatureBag bag;
        bag.domain_id = t;
        bag.label = c;
        bag.bag_id = "d" + std::to_string(t) + "-c" + std::to_string(c) + "-" + std::to_string(b);
        bag.embeddings = MatrixF(n, d);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < d; ++j) {
            raw[j] = background[j] + (witness[i] ? signal[j] : 0.0) + shift.noise * class_rng.normal();
          }
          auto row = bag.embeddings.row(i);
          for (std::size_t j = 0; j < d; ++j) {
            double acc = offset[j];
            for (std::size_t k = 0; k < d; ++k) acc += rotation(j, k) * raw[k];
            row[j] = static_cast<float>(acc);
          }
        }
        (b < train_per_class ? episode.train : episode.test).push_back(std::move(bag));
      }
    }
    episodes.push_back(std::move(episode));
  }
  return episodes;
}

}  // namespace aglr
