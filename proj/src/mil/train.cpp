#include <cmath>
#include <numeric>
#include <string>

#include "aglr/mil.hpp"

namespace aglr {

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidArgument, "weight_decay must be >= 0");
  if (embed_dim < 1 || attention_dim < 1) throw Error(ErrorCode::InvalidArgument, "MIL widths must be >= 1");
}

ClassWeights inverse_frequency_weights(std::span<const FeatureBag> bags) {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& bag : bags) ++counts[bag.label == 1 ? 1 : 0];
  if (counts[0] == 0 || counts[1] == 0) {
    throw Error(ErrorCode::SingleClassDataset, "class weighting needs both classes; got " +
                                                   std::to_string(counts[0]) + " negatives and " +
                                                   std::to_string(counts[1]) + " positives");
  }
  const auto total = static_cast<double>(bags.size());
  return {total / (2.0 * static_cast<double>(counts[0])), total / (2.0 * static_cast<double>(counts[1]))};
}

MilParams train(std::span<const FeatureBag> bags, const TrainConfig& config,
                const std::optional<MilParams>& init, const RngStream& rng, TrainLog* log) {
  config.validate();
  if (bags.empty()) throw Error(ErrorCode::InvalidArgument, "training set is empty");
  for (const auto& bag : bags) validate_bag(bag, bags.front().dim());
  const ClassWeights weights = config.class_weighting ? inverse_frequency_weights(bags) : ClassWeights{1.0, 1.0};

  MilParams params;
  if (init) {
    params = *init;
    if (params.shape().input_dim != static_cast<int>(bags.front().dim())) {
      throw Error(ErrorCode::DimensionMismatch, "warm-start parameters expect input dimension " +
                                                    std::to_string(params.shape().input_dim));
    }
  } else {
    RngStream init_rng = rng.child("init");
    params = MilParams::random(
        MilShape{static_cast<int>(bags.front().dim()), config.embed_dim, config.attention_dim, config.gated},
        init_rng);
  }

  const std::size_t count = params.size();
  std::vector<float> m(count, 0.0f);
  std::vector<float> v(count, 0.0f);
  const auto lr = static_cast<float>(config.learning_rate);
  const auto b1 = static_cast<float>(config.beta1);
  const auto b2 = static_cast<float>(config.beta2);
  const auto eps = static_cast<float>(config.epsilon);
  const auto decay = static_cast<float>(config.weight_decay);

  std::vector<std::size_t> order(bags.size());
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream shuffle_rng = rng.child("shuffle" + std::to_string(epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    for (std::size_t idx : order) {
      const FeatureBag& bag = bags[idx];
      auto res = loss_and_grads(bag.embeddings, bag.label, params, weights);
      epoch_loss += res.loss;
      ++step;
      // Bias-corrected Adam with coupled L2 decay.
      const float c1 = static_cast<float>(1.0 - std::pow(config.beta1, static_cast<double>(step)));
      const float c2 = static_cast<float>(1.0 - std::pow(config.beta2, static_cast<double>(step)));
      auto theta = params.values();
      auto grad = res.grads.values();
      for (std::size_t i = 0; i < count; ++i) {
        const float gi = grad[i] + decay * theta[i];
        m[i] = b1 * m[i] + (1.0f - b1) * gi;
        v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
        theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
      if (!std::isfinite(res.loss) || !params.all_finite()) {
        throw Error(ErrorCode::NonFiniteValue, "training state became non-finite at epoch " + std::to_string(epoch) +
                                                   " on bag '" + bag.bag_id + "'");
      }
    }
    if (log) log->epoch_mean_loss.push_back(epoch_loss / static_cast<double>(bags.size()));
  }
  if (log) log->steps += step;
  return params;
}

}  // namespace aglr
