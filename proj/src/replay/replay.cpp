#include "aglr/replay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace aglr {

void ReplayConfig::validate() const {
  if (!(q > 0.0 && q <= 100.0)) throw Error(ErrorCode::InvalidArgument, "q must lie in (0, 100]");
  if (emb_k_candidates.empty() || count_k_candidates.empty()) {
    throw Error(ErrorCode::InvalidArgument, "component-count candidate lists must be nonempty");
  }
  for (int k : emb_k_candidates) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "embedding K candidates must be >= 1");
  }
  for (int k : count_k_candidates) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "count K candidates must be >= 1");
  }
}

void GmmFamily::validate() const {
  if (class_counts[0] + class_counts[1] == 0) {
    throw Error(ErrorCode::InvalidArgument, "family of domain " + std::to_string(domain_id) + " has no bags");
  }
  for (int c = 0; c < 2; ++c) {
    if (embedding_models[c].dim != emb_dim) {
      throw Error(ErrorCode::DimensionMismatch, "family embedding model dimension differs from emb_dim");
    }
    if (count_models[c].dim != 1) throw Error(ErrorCode::DimensionMismatch, "count model must be 1-D");
    embedding_models[c].validate();
    count_models[c].validate();
  }
}

std::size_t kept_instance_count(std::size_t n, double q) {
  const auto m = static_cast<std::size_t>(std::floor(q * static_cast<double>(n) / 100.0));
  return std::max<std::size_t>(1, std::min(m, n));
}

std::vector<std::size_t> top_q_indices(std::span<const float> attention, double q) {
  if (!(q > 0.0 && q <= 100.0)) throw Error(ErrorCode::InvalidArgument, "q must lie in (0, 100]");
  if (attention.empty()) throw Error(ErrorCode::EmptyBag, "cannot filter an empty bag");
  const std::size_t keep = kept_instance_count(attention.size(), q);
  std::vector<std::size_t> idx(attention.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return attention[a] > attention[b]; });
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

MatrixF filter_top_q(const MatrixF& embeddings, std::span<const float> attention, double q) {
  if (attention.size() != embeddings.rows()) {
    throw Error(ErrorCode::LengthMismatch, "attention length " + std::to_string(attention.size()) +
                                               " != bag size " + std::to_string(embeddings.rows()));
  }
  MatrixF out;
  for (std::size_t i : top_q_indices(attention, q)) out.append_row(embeddings.row(i));
  return out;
}

namespace {

// Falls back to the largest feasible K when the candidates all exceed N.
GmmModel fit_with_fallback(const MatrixD& samples, const std::vector<int>& candidates, const EmConfig& em,
                           const RngStream& rng) {
  const int smallest = *std::min_element(candidates.begin(), candidates.end());
  if (static_cast<std::size_t>(smallest) <= samples.rows()) return select_k(samples, candidates, em, rng);
  const int fallback = static_cast<int>(samples.rows());
  const int single[] = {fallback};
  return select_k(samples, single, em, rng);
}

}  // namespace

GmmFamily fit_family(const EpisodeDataset& dataset, const MilParams& params, const ReplayConfig& config,
                     const EmConfig& em_config, const RngStream& rng) {
  config.validate();
  em_config.validate();
  if (dataset.train.empty()) throw Error(ErrorCode::InvalidArgument, "cannot fit a family on an empty split");

  GmmFamily family;
  family.domain_id = dataset.domain_id;
  family.q_used = config.q;
  family.attention_filtering = config.attention_filtering;
  family.emb_dim = static_cast<int>(dataset.train.front().dim());

  std::array<MatrixD, 2> pooled;
  std::array<std::vector<int>, 2> counts;
  for (const auto& bag : dataset.train) {
    validate_bag(bag, static_cast<std::size_t>(family.emb_dim));
    const int c = bag.label;
    ++family.class_counts[c];
    counts[c].push_back(static_cast<int>(bag.size()));
    MatrixF kept;
    if (config.attention_filtering) {
      kept = filter_top_q(bag.embeddings, attention_scores(bag, params), config.q);
    } else {
      kept = bag.embeddings;
    }
    pooled[c].append_rows(matrix_cast<double>(kept));
  }
  if (family.class_counts[0] == 0 || family.class_counts[1] == 0) {
    throw Error(ErrorCode::SingleClassDataset,
                "domain " + std::to_string(dataset.domain_id) + " train split lacks a class");
  }

  for (int c = 0; c < 2; ++c) {
    const RngStream class_rng = rng.child("class" + std::to_string(c));
    family.fit_sample_counts[c] = pooled[c].rows();
    family.embedding_models[c] = fit_with_fallback(pooled[c], config.emb_k_candidates, em_config,
                                                   class_rng.child("embedding"));
    family.count_models[c] =
        fit_count_model(counts[c], config.count_k_candidates, em_config, class_rng.child("count"));
  }
  return family;
}

FeatureBag synthesize_bag(const GmmFamily& family, int class_label, RngStream& rng) {
  if (class_label != 0 && class_label != 1) throw Error(ErrorCode::InvalidArgument, "label must be 0 or 1");
  const int n = sample_count(family.count_models[class_label], rng);
  const MatrixD draws = sample_embeddings(family.embedding_models[class_label], static_cast<std::size_t>(n), rng);
  FeatureBag bag;
  bag.domain_id = family.domain_id;
  bag.label = class_label;
  bag.synthetic = true;
  bag.embeddings = matrix_cast<float>(draws);
  return bag;
}

std::array<std::size_t, 2> replay_quotas(const GmmFamily& family, std::size_t current_train_size) {
  const auto total = static_cast<double>(family.class_counts[0] + family.class_counts[1]);
  if (total <= 0.0) throw Error(ErrorCode::InvalidArgument, "family has no class counts");
  const double share0 = static_cast<double>(family.class_counts[0]) / total;
  const auto q0 = static_cast<std::size_t>(std::llround(static_cast<double>(current_train_size) * share0));
  const std::size_t clamped = std::min(q0, current_train_size);
  return {clamped, current_train_size - clamped};
}

std::vector<FeatureBag> build_replay_set(std::span<const GmmFamily> families, std::size_t current_train_size,
                                         const RngStream& rng) {
  if (families.empty()) throw Error(ErrorCode::InvalidArgument, "replay needs at least one family");
  if (current_train_size < 1) throw Error(ErrorCode::InvalidArgument, "current_train_size must be >= 1");
  std::vector<FeatureBag> out;
  out.reserve(families.size() * current_train_size);
  for (const auto& family : families) {
    const auto quotas = replay_quotas(family, current_train_size);
    const std::string tag = "d" + std::to_string(family.domain_id);
    for (int c = 0; c < 2; ++c) {
      RngStream class_rng = rng.child(tag + "/class" + std::to_string(c));
      for (std::size_t i = 0; i < quotas[c]; ++i) {
        FeatureBag bag = synthesize_bag(family, c, class_rng);
        bag.bag_id = "syn-" + tag + "-c" + std::to_string(c) + "-" + std::to_string(i);
        out.push_back(std::move(bag));
      }
    }
  }
  return out;
}

std::vector<FeatureBag> assemble_hybrid(std::vector<FeatureBag> current, std::vector<FeatureBag> synthetic,
                                        RngStream& rng) {
  current.reserve(current.size() + synthetic.size());
  for (auto& bag : synthetic) current.push_back(std::move(bag));
  rng.shuffle(std::span<FeatureBag>(current));
  return current;
}

}  // namespace aglr
