#pragma once

// Attention-based MIL classifier: per-instance linear projection with ReLU,
// tanh attention scorer (optionally gated), softmax attention pooling, and a
// two-logit head. Forward and backward are templated on the arithmetic type:
// float for training, double for gradient checks.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "aglr/core.hpp"

namespace aglr {

struct MilShape {
  int input_dim = 32;
  int embed_dim = 128;
  int attention_dim = 64;
  bool gated = false;

  bool operator==(const MilShape&) const = default;
};

// All parameters live in one flat array so the optimizer, finite-difference
// checks and checkpointing can treat them uniformly. Blocks (row-major):
//   proj_weight   embed_dim x input_dim    proj_bias   embed_dim
//   att_weight    attention_dim x embed_dim att_bias   attention_dim
//   gate_weight   attention_dim x embed_dim gate_bias  attention_dim   (gated only)
//   att_vector    attention_dim
//   head_weight   2 x embed_dim            head_bias   2
template <typename T>
class BasicMilParams {
 public:
  BasicMilParams() = default;
  explicit BasicMilParams(MilShape shape);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static BasicMilParams random(MilShape shape, RngStream& rng);

  const MilShape& shape() const noexcept { return shape_; }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  T* proj_weight() { return values_.data() + off_.proj_weight; }
  T* proj_bias() { return values_.data() + off_.proj_bias; }
  T* att_weight() { return values_.data() + off_.att_weight; }
  T* att_bias() { return values_.data() + off_.att_bias; }
  T* gate_weight() { return values_.data() + off_.gate_weight; }
  T* gate_bias() { return values_.data() + off_.gate_bias; }
  T* att_vector() { return values_.data() + off_.att_vector; }
  T* head_weight() { return values_.data() + off_.head_weight; }
  T* head_bias() { return values_.data() + off_.head_bias; }
  const T* proj_weight() const { return values_.data() + off_.proj_weight; }
  const T* proj_bias() const { return values_.data() + off_.proj_bias; }
  const T* att_weight() const { return values_.data() + off_.att_weight; }
  const T* att_bias() const { return values_.data() + off_.att_bias; }
  const T* gate_weight() const { return values_.data() + off_.gate_weight; }
  const T* gate_bias() const { return values_.data() + off_.gate_bias; }
  const T* att_vector() const { return values_.data() + off_.att_vector; }
  const T* head_weight() const { return values_.data() + off_.head_weight; }
  const T* head_bias() const { return values_.data() + off_.head_bias; }

  template <typename U>
  BasicMilParams<U> cast() const {
    BasicMilParams<U> out(shape_);
    auto dst = out.values();
    for (std::size_t i = 0; i < values_.size(); ++i) dst[i] = static_cast<U>(values_[i]);
    return out;
  }

  bool all_finite() const;

  bool operator==(const BasicMilParams& other) const {
    return shape_ == other.shape_ && values_ == other.values_;
  }

 private:
  struct Offsets {
    std::size_t proj_weight = 0, proj_bias = 0, att_weight = 0, att_bias = 0, gate_weight = 0,
                gate_bias = 0, att_vector = 0, head_weight = 0, head_bias = 0, total = 0;
  };
  static Offsets layout(const MilShape& shape);

  MilShape shape_;
  Offsets off_;
  std::vector<T> values_;
};

using MilParams = BasicMilParams<float>;

template <typename T>
struct MilOutput {
  std::array<T, 2> logits{};
  std::vector<T> attention;
  std::vector<T> pooled;
};

template <typename T>
struct LossAndGrads {
  T loss{};
  BasicMilParams<T> grads;
};

using ClassWeights = std::array<double, 2>;

template <typename T>
MilOutput<T> forward(const MatrixF& embeddings, const BasicMilParams<T>& params);

template <typename T>
LossAndGrads<T> loss_and_grads(const MatrixF& embeddings, int label, const BasicMilParams<T>& params,
                               const ClassWeights& class_weights);

template <typename T>
MilOutput<T> forward(const FeatureBag& bag, const BasicMilParams<T>& params) {
  return forward(bag.embeddings, params);
}

// Softmax probability of class 1.
double predict_score(const FeatureBag& bag, const MilParams& params);
double score_from_logits(double logit0, double logit1);

std::vector<float> attention_scores(const FeatureBag& bag, const MilParams& params);

struct TrainConfig {
  int epochs = 20;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-5;
  bool class_weighting = true;
  int embed_dim = 128;
  int attention_dim = 64;
  bool gated = false;

  void validate() const;
};

struct TrainLog {
  std::vector<double> epoch_mean_loss;
  std::size_t steps = 0;
};

// Inverse class frequency N / (2 N_c). Throws SingleClassDataset if a class is
// absent.
ClassWeights inverse_frequency_weights(std::span<const FeatureBag> bags);

// epochs * |bags| single-bag Adam steps over a per-epoch shuffled order.
// `init` warm-starts; otherwise parameters are freshly initialized from
// rng.child("init").
MilParams train(std::span<const FeatureBag> bags, const TrainConfig& config,
                const std::optional<MilParams>& init, const RngStream& rng, TrainLog* log = nullptr);

}  // namespace aglr
