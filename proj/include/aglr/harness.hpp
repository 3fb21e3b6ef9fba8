#pragma once

// Domain-incremental sequence runner. Every strategy trains sequentially over
// the episodes and fills one train-test matrix row per session.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aglr/core.hpp"
#include "aglr/gmm.hpp"
#include "aglr/metrics.hpp"
#include "aglr/mil.hpp"
#include "aglr/replay.hpp"

namespace aglr {

enum class StrategyKind { Naive, Joint, Cumulative, BufferReplay, GDumb, Aglr };

struct Strategy {
  StrategyKind kind = StrategyKind::Naive;
  std::size_t buffer_size = 100;
  ReplayConfig replay;

  static Strategy naive() { return {StrategyKind::Naive, 100, {}}; }
  static Strategy joint() { return {StrategyKind::Joint, 100, {}}; }
  static Strategy cumulative() { return {StrategyKind::Cumulative, 100, {}}; }
  static Strategy buffer_replay(std::size_t buffer) { return {StrategyKind::BufferReplay, buffer, {}}; }
  static Strategy gdumb(std::size_t buffer) { return {StrategyKind::GDumb, buffer, {}}; }
  static Strategy aglr(ReplayConfig config = {}) { return {StrategyKind::Aglr, 100, std::move(config)}; }

  // CLI name: naive | joint | cumulative | replay | gdumb | aglr.
  std::string name() const;
  static std::optional<StrategyKind> parse(std::string_view name);

  void validate() const;
};

struct SequenceSpec {
  std::string name = "synthetic";
  std::vector<EpisodeDataset> episodes;
  std::uint64_t seed = 0;

  std::size_t dim() const;
  // T >= 2, shared D, every episode valid.
  void validate() const;
};

enum class BufferPolicy { Reservoir, GreedyBalanced };

struct BufferState {
  std::vector<FeatureBag> bags;
  std::uint64_t seen = 0;

  std::array<std::size_t, 2> class_counts() const;
};

BufferState update_buffer(BufferState state, std::span<const FeatureBag> new_bags, BufferPolicy policy,
                          std::size_t capacity, RngStream& rng);

// Training set of session t (1-based).
std::vector<FeatureBag> build_training_set(const Strategy& strategy, int t, std::span<const EpisodeDataset> episodes,
                                           std::span<const GmmFamily> families, const BufferState& buffer,
                                           const RngStream& rng);

// Throws AccessViolation if any real bag from a domain earlier than t is
// present. Returns the number of synthetic past-domain bags inspected.
std::size_t check_episodic_access(std::span<const FeatureBag> training_set, int t);

struct RunOptions {
  TrainConfig train;
  EmConfig em;
  IlmVariant ilm = IlmVariant::LowerTriangular;
  // Test-bag scoring threads per matrix row; results do not depend on it.
  int eval_threads = 1;
  // The last session's family is never replayed within the run; skipping it
  // leaves the matrix unchanged.
  bool fit_final_family = true;
};

struct EpisodeRecord {
  int domain_id = 0;
  std::size_t training_set_size = 0;
  std::size_t synthetic_bags = 0;
  std::size_t real_past_bags = 0;
  double seconds = 0.0;
  std::array<std::size_t, 2> family_fit_samples{0, 0};
};

struct RunResult {
  std::string strategy;
  std::string sequence;
  TrainTestMatrix matrix;
  ClReport report;
  std::vector<EpisodeRecord> episodes;
  std::vector<GmmFamily> families;
  std::vector<MilParams> checkpoints;
  std::size_t access_checks = 0;
};

MetricTriple evaluate_bags(std::span<const FeatureBag> bags, const MilParams& params, int threads = 1);

RunResult run_sequence(const SequenceSpec& spec, const Strategy& strategy, const RunOptions& options,
                       const RngStream& rng);

}  // namespace aglr
