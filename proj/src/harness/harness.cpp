#include "aglr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <string>
#include <thread>

namespace aglr {

std::string Strategy::name() const {
  switch (kind) {
    case StrategyKind::Naive: return "naive";
    case StrategyKind::Joint: return "joint";
    case StrategyKind::Cumulative: return "cumulative";
    case StrategyKind::BufferReplay: return "replay";
    case StrategyKind::GDumb: return "gdumb";
    case StrategyKind::Aglr: return "aglr";
  }
  return "unknown";
}

std::optional<StrategyKind> Strategy::parse(std::string_view name) {
  if (name == "naive") return StrategyKind::Naive;
  if (name == "joint") return StrategyKind::Joint;
  if (name == "cumulative") return StrategyKind::Cumulative;
  if (name == "replay") return StrategyKind::BufferReplay;
  if (name == "gdumb") return StrategyKind::GDumb;
  if (name == "aglr") return StrategyKind::Aglr;
  return std::nullopt;
}

void Strategy::validate() const {
  if ((kind == StrategyKind::BufferReplay || kind == StrategyKind::GDumb) && buffer_size < 1) {
    throw Error(ErrorCode::InvalidArgument, "buffer size must be >= 1");
  }
  if (kind == StrategyKind::Aglr) replay.validate();
}

std::size_t SequenceSpec::dim() const {
  for (const auto& ep : episodes) {
    if (!ep.train.empty()) return ep.train.front().dim();
  }
  return 0;
}

void SequenceSpec::validate() const {
  if (episodes.size() < 2) throw Error(ErrorCode::InvalidArgument, "a sequence needs at least two episodes");
  const std::size_t d = dim();
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& ep = episodes[i];
    if (ep.domain_id != static_cast<int>(i + 1)) {
      throw Error(ErrorCode::InvalidArgument, "episode " + std::to_string(i + 1) + " carries domain id " +
                                                  std::to_string(ep.domain_id));
    }
    validate_episode(ep, d);
    for (const auto* split : {&ep.train, &ep.test}) {
      for (const auto& bag : *split) {
        if (bag.domain_id != ep.domain_id) {
          throw Error(ErrorCode::InvalidArgument, "bag '" + bag.bag_id + "' is filed under domain " +
                                                      std::to_string(ep.domain_id) + " but labeled " +
                                                      std::to_string(bag.domain_id));
        }
      }
    }
  }
}

std::array<std::size_t, 2> BufferState::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& bag : bags) ++counts[bag.label];
  return counts;
}

BufferState update_buffer(BufferState state, std::span<const FeatureBag> new_bags, BufferPolicy policy,
                          std::size_t capacity, RngStream& rng) {
  if (capacity < 1) throw Error(ErrorCode::InvalidArgument, "buffer capacity must be >= 1");
  for (const auto& bag : new_bags) {
    ++state.seen;
    if (state.bags.size() < capacity) {
      state.bags.push_back(bag);
      continue;
    }
    if (policy == BufferPolicy::Reservoir) {
      const auto slot = rng.index(state.seen);
      if (slot < capacity) state.bags[static_cast<std::size_t>(slot)] = bag;
      continue;
    }
    // Greedy class balancing: admit only by evicting from the largest class.
    const auto counts = state.class_counts();
    const int largest = counts[1] > counts[0] ? 1 : 0;
    if (counts[bag.label] >= counts[largest]) continue;
    auto victim_rank = rng.index(counts[largest]);
    for (auto& held : state.bags) {
      if (held.label != largest) continue;
      if (victim_rank-- == 0) {
        held = bag;
        break;
      }
    }
  }
  return state;
}

std::vector<FeatureBag> build_training_set(const Strategy& strategy, int t, std::span<const EpisodeDataset> episodes,
                                           std::span<const GmmFamily> families, const BufferState& buffer,
                                           const RngStream& rng) {
  if (t < 1 || static_cast<std::size_t>(t) > episodes.size()) {
    throw Error(ErrorCode::InvalidArgument, "session index out of range");
  }
  const auto& current = episodes[static_cast<std::size_t>(t - 1)].train;
  std::vector<FeatureBag> out;
  auto append = [&out](const std::vector<FeatureBag>& bags) { out.insert(out.end(), bags.begin(), bags.end()); };
  switch (strategy.kind) {
    case StrategyKind::Naive:
      return current;
    case StrategyKind::Joint:
      for (const auto& ep : episodes) append(ep.train);
      return out;
    case StrategyKind::Cumulative:
      for (int i = 0; i < t; ++i) append(episodes[static_cast<std::size_t>(i)].train);
      return out;
    case StrategyKind::BufferReplay:
      append(current);
      append(buffer.bags);
      return out;
    case StrategyKind::GDumb:
      return buffer.bags;
    case StrategyKind::Aglr: {
      if (t == 1) return current;
      if (families.size() < static_cast<std::size_t>(t - 1)) {
        throw Error(ErrorCode::InvalidArgument, "session " + std::to_string(t) + " needs " +
                                                    std::to_string(t - 1) + " GMM families");
      }
      auto synthetic = build_replay_set(families.first(static_cast<std::size_t>(t - 1)), current.size(),
                                        rng.child("replay"));
      RngStream shuffle_rng = rng.child("hybrid");
      return assemble_hybrid(current, std::move(synthetic), shuffle_rng);
    }
  }
  return out;
}

std::size_t check_episodic_access(std::span<const FeatureBag> training_set, int t) {
  std::size_t synthetic_past = 0;
  for (const auto& bag : training_set) {
    if (bag.domain_id < t) {
      if (!bag.synthetic) {
        throw Error(ErrorCode::AccessViolation, "real bag '" + bag.bag_id + "' of domain " +
                                                    std::to_string(bag.domain_id) + " used in session " +
                                                    std::to_string(t));
      }
      ++synthetic_past;
    } else if (bag.domain_id > t) {
      throw Error(ErrorCode::AccessViolation, "bag '" + bag.bag_id + "' from future domain " +
                                                  std::to_string(bag.domain_id) + " used in session " +
                                                  std::to_string(t));
    }
  }
  return synthetic_past;
}

MetricTriple evaluate_bags(std::span<const FeatureBag> bags, const MilParams& params, int threads) {
  std::vector<double> scores(bags.size());
  std::vector<int> labels(bags.size());
  auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) scores[i] = predict_score(bags[i], params);
  };
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || bags.size() < 2 * workers) {
    score_range(0, bags.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (bags.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(bags.size(), begin + chunk);
      if (begin < end) pool.emplace_back(score_range, begin, end);
    }
  }
  for (std::size_t i = 0; i < bags.size(); ++i) labels[i] = bags[i].label;
  return evaluate_scores(labels, scores);
}

namespace {

void fill_row(TrainTestMatrix& matrix, int row, const SequenceSpec& spec, const MilParams& params, int threads) {
  for (std::size_t j = 0; j < spec.episodes.size(); ++j) {
    matrix.set(row, static_cast<int>(j), evaluate_bags(spec.episodes[j].test, params, threads));
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

RunResult run_sequence(const SequenceSpec& spec, const Strategy& strategy, const RunOptions& options,
                       const RngStream& rng) {
  spec.validate();
  strategy.validate();
  options.train.validate();
  options.em.validate();

  const int t_total = static_cast<int>(spec.episodes.size());
  RunResult result;
  result.strategy = strategy.name();
  result.sequence = spec.name;
  result.matrix = TrainTestMatrix(t_total);

  if (strategy.kind == StrategyKind::Joint) {
    // Trained once on everything; the single evaluation fills every row.
    const auto start = std::chrono::steady_clock::now();
    const RngStream ep_rng = rng.child("joint");
    const auto training = build_training_set(strategy, t_total, spec.episodes, {}, {}, ep_rng.child("data"));
    MilParams params = train(training, options.train, std::nullopt, ep_rng.child("train"));
    fill_row(result.matrix, 0, spec, params, options.eval_threads);
    for (int i = 1; i < t_total; ++i) {
      for (int j = 0; j < t_total; ++j) result.matrix.set(i, j, result.matrix.at(0, j));
    }
    EpisodeRecord record;
    record.domain_id = t_total;
    record.training_set_size = training.size();
    record.seconds = seconds_since(start);
    result.episodes.push_back(record);
    result.checkpoints.push_back(std::move(params));
    result.report = cl_report(result.matrix, options.ilm);
    result.report.ilm_applicable = false;
    result.report.bwt_applicable = false;
    return result;
  }

  std::optional<MilParams> model;
  BufferState buffer;
  for (int t = 1; t <= t_total; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const EpisodeDataset& episode = spec.episodes[static_cast<std::size_t>(t - 1)];
    const RngStream ep_rng = rng.child("episode" + std::to_string(t));

    if (strategy.kind == StrategyKind::GDumb) {
      RngStream buffer_rng = ep_rng.child("buffer");
      buffer = update_buffer(std::move(buffer), episode.train, BufferPolicy::GreedyBalanced,
                             strategy.buffer_size, buffer_rng);
    }

    const auto training =
        build_training_set(strategy, t, spec.episodes, result.families, buffer, ep_rng.child("data"));

    EpisodeRecord record;
    record.domain_id = episode.domain_id;
    record.training_set_size = training.size();
    for (const auto& bag : training) {
      if (bag.synthetic) ++record.synthetic_bags;
      if (!bag.synthetic && bag.domain_id < t) ++record.real_past_bags;
    }
    if (strategy.kind == StrategyKind::Aglr) result.access_checks += check_episodic_access(training, t);

    const std::optional<MilParams> init = strategy.kind == StrategyKind::GDumb ? std::nullopt : model;
    model = train(training, options.train, init, ep_rng.child("train"));

    if (strategy.kind == StrategyKind::BufferReplay) {
      RngStream buffer_rng = ep_rng.child("buffer");
      buffer = update_buffer(std::move(buffer), episode.train, BufferPolicy::Reservoir, strategy.buffer_size,
                             buffer_rng);
    }
    if (strategy.kind == StrategyKind::Aglr && (t < t_total || options.fit_final_family)) {
      GmmFamily family = fit_family(episode, *model, strategy.replay, options.em, ep_rng.child("family"));
      record.family_fit_samples = family.fit_sample_counts;
      result.families.push_back(std::move(family));
    }

    fill_row(result.matrix, t - 1, spec, *model, options.eval_threads);
    record.seconds = seconds_since(start);
    result.episodes.push_back(record);
    result.checkpoints.push_back(*model);
  }
  result.report = cl_report(result.matrix, options.ilm);
  return result;
}

}  // namespace aglr
