#include <cmath>
#include <unordered_set>

#include "aglr/core.hpp"

namespace aglr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyBag: return "EmptyBag";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::DegenerateComponent: return "DegenerateComponent";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::SingleClassDataset: return "SingleClassDataset";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UndefinedMetric: return "UndefinedMetric";
    case ErrorCode::IncompleteMatrix: return "IncompleteMatrix";
    case ErrorCode::AccessViolation: return "AccessViolation";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

void validate_bag(const FeatureBag& bag, std::size_t expected_dim) {
  if (bag.size() == 0) throw Error(ErrorCode::EmptyBag, "bag '" + bag.bag_id + "' has no instances");
  if (bag.dim() != expected_dim) {
    throw Error(ErrorCode::DimensionMismatch, "bag '" + bag.bag_id + "' has dimension " +
                                                  std::to_string(bag.dim()) + ", expected " +
                                                  std::to_string(expected_dim));
  }
  if (bag.label != 0 && bag.label != 1) {
    throw Error(ErrorCode::InvalidArgument,
                "bag '" + bag.bag_id + "' has label " + std::to_string(bag.label));
  }
  if (bag.domain_id < 1) {
    throw Error(ErrorCode::InvalidArgument, "bag '" + bag.bag_id + "' has domain id < 1");
  }
  const auto values = bag.embeddings.flat();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::NonFiniteValue,
                  "bag '" + bag.bag_id + "' row " + std::to_string(i / bag.dim()) +
                      " column " + std::to_string(i % bag.dim()));
    }
  }
}

void validate_episode(const EpisodeDataset& episode, std::size_t expected_dim) {
  std::unordered_set<std::string> train_ids;
  bool seen[2] = {false, false};
  for (const auto& bag : episode.train) {
    validate_bag(bag, expected_dim);
    train_ids.insert(bag.bag_id);
    seen[bag.label] = true;
  }
  for (const auto& bag : episode.test) {
    validate_bag(bag, expected_dim);
    if (train_ids.contains(bag.bag_id)) {
      throw Error(ErrorCode::InvalidArgument, "bag '" + bag.bag_id + "' of domain " +
                                                  std::to_string(episode.domain_id) +
                                                  " appears in both train and test");
    }
  }
  if (!seen[0] || !seen[1]) {
    throw Error(ErrorCode::SingleClassDataset,
                "domain " + std::to_string(episode.domain_id) + " train split lacks a class");
  }
}

std::pair<std::vector<FeatureBag>, std::vector<FeatureBag>> split_by_class(
    const std::vector<FeatureBag>& bags) {
  std::pair<std::vector<FeatureBag>, std::vector<FeatureBag>> out;
  for (const auto& bag : bags) {
    (bag.label == 0 ? out.first : out.second).push_back(bag);
  }
  return out;
}

}  // namespace aglr
