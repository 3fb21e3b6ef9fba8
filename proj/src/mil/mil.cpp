#include "aglr/mil.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "aglr/simd.hpp"

namespace aglr {

template <typename T>
typename BasicMilParams<T>::Offsets BasicMilParams<T>::layout(const MilShape& s) {
  const auto D = static_cast<std::size_t>(s.input_dim);
  const auto d = static_cast<std::size_t>(s.embed_dim);
  const auto L = static_cast<std::size_t>(s.attention_dim);
  Offsets o;
  std::size_t at = 0;
  o.proj_weight = at; at += d * D;
  o.proj_bias = at; at += d;
  o.att_weight = at; at += L * d;
  o.att_bias = at; at += L;
  o.gate_weight = at; if (s.gated) at += L * d;
  o.gate_bias = at; if (s.gated) at += L;
  o.att_vector = at; at += L;
  o.head_weight = at; at += 2 * d;
  o.head_bias = at; at += 2;
  o.total = at;
  return o;
}

template <typename T>
BasicMilParams<T>::BasicMilParams(MilShape shape)
    : shape_(shape), off_(layout(shape)), values_(off_.total, T{}) {
  if (shape.input_dim < 1 || shape.embed_dim < 1 || shape.attention_dim < 1) {
    throw Error(ErrorCode::InvalidArgument, "MIL dimensions must be >= 1");
  }
}

template <typename T>
BasicMilParams<T> BasicMilParams<T>::random(MilShape shape, RngStream& rng) {
  BasicMilParams p(shape);
  const auto D = static_cast<std::size_t>(shape.input_dim);
  const auto d = static_cast<std::size_t>(shape.embed_dim);
  const auto L = static_cast<std::size_t>(shape.attention_dim);
  auto fill = [&rng](T* w, std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) w[i] = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  };
  fill(p.proj_weight(), d * D, D);
  fill(p.att_weight(), L * d, d);
  if (shape.gated) fill(p.gate_weight(), L * d, d);
  fill(p.att_vector(), L, L);
  fill(p.head_weight(), 2 * d, d);
  return p;
}

template <typename T>
bool BasicMilParams<T>::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
}

namespace {

template <typename T>
struct Activations {
  std::size_t n = 0, D = 0, d = 0, L = 0;
  std::vector<T> converted;  // double path only: n x D copy of the inputs
  const float* raw = nullptr;
  std::vector<T> pre, hidden, att, gate, attention, pooled;
  std::array<T, 2> logits{};

  const T* input_row(std::size_t i) const {
    if constexpr (std::is_same_v<T, float>) {
      return raw + i * D;
    } else {
      return converted.data() + i * D;
    }
  }
};

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
void run_forward(const MatrixF& x, const BasicMilParams<T>& p, Activations<T>& a) {
  const MilShape& s = p.shape();
  if (x.rows() == 0) throw Error(ErrorCode::EmptyBag, "cannot run MIL forward on an empty bag");
  if (x.cols() != static_cast<std::size_t>(s.input_dim)) {
    throw Error(ErrorCode::DimensionMismatch, "bag dimension " + std::to_string(x.cols()) +
                                                  " does not match model input " +
                                                  std::to_string(s.input_dim));
  }
  a.n = x.rows();
  a.D = x.cols();
  a.d = static_cast<std::size_t>(s.embed_dim);
  a.L = static_cast<std::size_t>(s.attention_dim);
  a.raw = x.data();
  if constexpr (!std::is_same_v<T, float>) a.converted.assign(x.flat().begin(), x.flat().end());

  const std::size_t n = a.n, D = a.D, d = a.d, L = a.L;
  a.pre.resize(n * d);
  a.hidden.resize(n * d);
  a.att.resize(n * L);
  a.gate.assign(s.gated ? n * L : 0, T{});
  a.attention.resize(n);
  a.pooled.assign(d, T{});

  std::vector<T> scored(L);
  const T* P = p.proj_weight();
  const T* pb = p.proj_bias();
  const T* V = p.att_weight();
  const T* vb = p.att_bias();
  const T* U = p.gate_weight();
  const T* ub = p.gate_bias();
  const T* w = p.att_vector();
  for (std::size_t i = 0; i < n; ++i) {
    const T* xi = a.input_row(i);
    T* pre = a.pre.data() + i * d;
    T* h = a.hidden.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      pre[j] = pb[j] + simd::dot(P + j * D, xi, D);
      h[j] = pre[j] > T(0) ? pre[j] : T(0);
    }
    T* at = a.att.data() + i * L;
    for (std::size_t l = 0; l < L; ++l) {
      at[l] = std::tanh(vb[l] + simd::dot(V + l * d, h, d));
      scored[l] = at[l];
    }
    if (s.gated) {
      T* g = a.gate.data() + i * L;
      for (std::size_t l = 0; l < L; ++l) {
        g[l] = sigmoid(ub[l] + simd::dot(U + l * d, h, d));
        scored[l] *= g[l];
      }
    }
    a.attention[i] = simd::dot(w, scored.data(), L);
  }

  const T peak = *std::max_element(a.attention.begin(), a.attention.end());
  T total{};
  for (auto& v : a.attention) {
    v = std::exp(v - peak);
    total += v;
  }
  for (auto& v : a.attention) v /= total;

  for (std::size_t i = 0; i < n; ++i) simd::axpy(a.attention[i], a.hidden.data() + i * d, a.pooled.data(), d);
  const T* W = p.head_weight();
  const T* wb = p.head_bias();
  for (int c = 0; c < 2; ++c) a.logits[c] = wb[c] + simd::dot(W + c * d, a.pooled.data(), d);
}

}  // namespace

template <typename T>
MilOutput<T> forward(const MatrixF& embeddings, const BasicMilParams<T>& params) {
  Activations<T> a;
  run_forward(embeddings, params, a);
  MilOutput<T> out;
  out.logits = a.logits;
  out.attention = std::move(a.attention);
  out.pooled = std::move(a.pooled);
  return out;
}

template <typename T>
LossAndGrads<T> loss_and_grads(const MatrixF& embeddings, int label, const BasicMilParams<T>& p,
                               const ClassWeights& class_weights) {
  if (label != 0 && label != 1) throw Error(ErrorCode::InvalidArgument, "label must be 0 or 1");
  Activations<T> a;
  run_forward(embeddings, p, a);
  const MilShape& s = p.shape();
  const std::size_t n = a.n, D = a.D, d = a.d, L = a.L;

  LossAndGrads<T> out{T{}, BasicMilParams<T>(s)};
  BasicMilParams<T>& g = out.grads;

  // Weighted cross-entropy through the 2-way softmax.
  const T weight = static_cast<T>(class_weights[label]);
  const T peak = std::max(a.logits[0], a.logits[1]);
  const T lse = peak + std::log(std::exp(a.logits[0] - peak) + std::exp(a.logits[1] - peak));
  out.loss = weight * (lse - a.logits[label]);
  std::array<T, 2> dlogit;
  for (int c = 0; c < 2; ++c) dlogit[c] = weight * (std::exp(a.logits[c] - lse) - (c == label ? T(1) : T(0)));

  const T* W = p.head_weight();
  std::vector<T> dpooled(d, T{});
  for (int c = 0; c < 2; ++c) {
    simd::axpy(dlogit[c], a.pooled.data(), g.head_weight() + c * d, d);
    g.head_bias()[c] += dlogit[c];
    simd::axpy(dlogit[c], W + c * d, dpooled.data(), d);
  }

  // Softmax over attention scores.
  std::vector<T> dscore(n);
  T mean_dalpha{};
  for (std::size_t i = 0; i < n; ++i) {
    dscore[i] = simd::dot(dpooled.data(), a.hidden.data() + i * d, d);
    mean_dalpha += a.attention[i] * dscore[i];
  }
  for (std::size_t i = 0; i < n; ++i) dscore[i] = a.attention[i] * (dscore[i] - mean_dalpha);

  const T* V = p.att_weight();
  const T* U = p.gate_weight();
  const T* w = p.att_vector();
  std::vector<T> dh(d);
  for (std::size_t i = 0; i < n; ++i) {
    const T* h = a.hidden.data() + i * d;
    const T* at = a.att.data() + i * L;
    for (std::size_t j = 0; j < d; ++j) dh[j] = a.attention[i] * dpooled[j];

    for (std::size_t l = 0; l < L; ++l) {
      const T gate = s.gated ? a.gate[i * L + l] : T(1);
      const T scored = at[l] * gate;
      g.att_vector()[l] += dscore[i] * scored;
      const T dscored = dscore[i] * w[l];
      const T du = dscored * gate * (T(1) - at[l] * at[l]);
      if (du != T(0)) {
        simd::axpy(du, h, g.att_weight() + l * d, d);
        g.att_bias()[l] += du;
        simd::axpy(du, V + l * d, dh.data(), d);
      }
      if (s.gated) {
        const T dv = dscored * at[l] * gate * (T(1) - gate);
        if (dv != T(0)) {
          simd::axpy(dv, h, g.gate_weight() + l * d, d);
          g.gate_bias()[l] += dv;
          simd::axpy(dv, U + l * d, dh.data(), d);
        }
      }
    }

    const T* pre = a.pre.data() + i * d;
    const T* xi = a.input_row(i);
    for (std::size_t j = 0; j < d; ++j) {
      if (pre[j] > T(0) && dh[j] != T(0)) {
        simd::axpy(dh[j], xi, g.proj_weight() + j * D, D);
        g.proj_bias()[j] += dh[j];
      }
    }
  }
  return out;
}

double score_from_logits(double logit0, double logit1) { return 1.0 / (1.0 + std::exp(logit0 - logit1)); }

double predict_score(const FeatureBag& bag, const MilParams& params) {
  const auto out = forward(bag.embeddings, params);
  return score_from_logits(out.logits[0], out.logits[1]);
}

std::vector<float> attention_scores(const FeatureBag& bag, const MilParams& params) {
  return forward(bag.embeddings, params).attention;
}

template class BasicMilParams<float>;
template class BasicMilParams<double>;
template MilOutput<float> forward(const MatrixF&, const BasicMilParams<float>&);
template MilOutput<double> forward(const MatrixF&, const BasicMilParams<double>&);
template LossAndGrads<float> loss_and_grads(const MatrixF&, int, const BasicMilParams<float>&,
                                            const ClassWeights&);
template LossAndGrads<double> loss_and_grads(const MatrixF&, int, const BasicMilParams<double>&,
                                             const ClassWeights&);

}  // namespace aglr
