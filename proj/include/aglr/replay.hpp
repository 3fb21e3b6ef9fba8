#pragma once

// Buffer-free latent replay. After each episode the classifier's attention
// selects the informative instances of every training bag; class-wise
// mixtures over those embeddings, plus mixtures over bag sizes, form the
// episode's GMM family. Later episodes draw synthetic bags from every stored
// family instead of keeping real data.

#include <array>
#include <span>
#include <vector>

#include "aglr/core.hpp"
#include "aglr/gmm.hpp"
#include "aglr/mil.hpp"

namespace aglr {

struct ReplayConfig {
  double q = 80.0;  // percent of top-attention instances kept per bag
  std::vector<int> emb_k_candidates{8, 16, 24};
  std::vector<int> count_k_candidates{1, 2, 3, 4, 5};
  bool attention_filtering = true;

  void validate() const;
};

struct GmmFamily {
  int domain_id = 1;
  std::array<GmmModel, 2> embedding_models;
  std::array<GmmModel, 2> count_models;
  std::array<std::size_t, 2> class_counts{0, 0};
  // Instances each class's embedding mixture was fitted on.
  std::array<std::size_t, 2> fit_sample_counts{0, 0};
  double q_used = 80.0;
  bool attention_filtering = true;
  int emb_dim = 0;

  void validate() const;
};

// Number of rows filter_top_q keeps: max(1, floor(q * n / 100)).
std::size_t kept_instance_count(std::size_t n, double q);

// Rows with the largest attention, in original order; ties prefer the lower
// index.
MatrixF filter_top_q(const MatrixF& embeddings, std::span<const float> attention, double q);

// Row indices selected by filter_top_q, ascending.
std::vector<std::size_t> top_q_indices(std::span<const float> attention, double q);

GmmFamily fit_family(const EpisodeDataset& dataset, const MilParams& params, const ReplayConfig& config,
                     const EmConfig& em_config, const RngStream& rng);

FeatureBag synthesize_bag(const GmmFamily& family, int class_label, RngStream& rng);

// Per-class synthetic quota for one family: class 0 gets
// round(size * n0 / (n0 + n1)), class 1 the remainder.
std::array<std::size_t, 2> replay_quotas(const GmmFamily& family, std::size_t current_train_size);

// current_train_size synthetic bags from each family, generated fresh.
std::vector<FeatureBag> build_replay_set(std::span<const GmmFamily> families, std::size_t current_train_size,
                                         const RngStream& rng);

std::vector<FeatureBag> assemble_hybrid(std::vector<FeatureBag> current, std::vector<FeatureBag> synthetic,
                                        RngStream& rng);

}  // namespace aglr
