#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "aglr/error.hpp"
#include "aglr/matrix.hpp"
#include "aglr/rng.hpp"

namespace aglr {

// One slide: a variable-length sequence of instance embeddings.
struct FeatureBag {
  std::string bag_id;
  int domain_id = 1;
  int label = 0;
  MatrixF embeddings;  // n x D
  bool synthetic = false;

  std::size_t size() const noexcept { return embeddings.rows(); }
  std::size_t dim() const noexcept { return embeddings.cols(); }

  bool operator==(const FeatureBag&) const = default;
};

struct EpisodeDataset {
  int domain_id = 1;
  std::vector<FeatureBag> train;
  std::vector<FeatureBag> test;
};

void validate_bag(const FeatureBag& bag, std::size_t expected_dim);

// Checks bag-level invariants for every bag plus the split/class rules of an
// episode (disjoint ids, both classes in train).
void validate_episode(const EpisodeDataset& episode, std::size_t expected_dim);

std::pair<std::vector<FeatureBag>, std::vector<FeatureBag>> split_by_class(
    const std::vector<FeatureBag>& bags);

}  // namespace aglr
