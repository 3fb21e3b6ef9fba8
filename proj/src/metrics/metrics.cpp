#include "aglr/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "aglr/error.hpp"

namespace aglr {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(a) + " labels vs " + std::to_string(b) + " values");
  }
}

void check_binary(std::span<const int> labels) {
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
  }
}

}  // namespace

double weighted_f1(std::span<const int> labels, std::span<const int> predictions) {
  check_lengths(labels.size(), predictions.size());
  if (labels.empty()) throw Error(ErrorCode::LengthMismatch, "weighted F1 needs at least one sample");
  check_binary(labels);
  check_binary(predictions);
  // confusion[truth][prediction]
  double confusion[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < labels.size(); ++i) confusion[labels[i]][predictions[i]] += 1.0;
  const auto n = static_cast<double>(labels.size());
  double total = 0.0;
  for (int c = 0; c < 2; ++c) {
    const double tp = confusion[c][c];
    const double fp = confusion[1 - c][c];
    const double fn = confusion[c][1 - c];
    const double support = tp + fn;
    const double denom = 2.0 * tp + fp + fn;
    // 2PR/(P+R) == 2TP/(2TP+FP+FN); zero when undefined.
    const double f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
    total += support / n * f1;
  }
  return total;
}

double auroc(std::span<const int> labels, std::span<const double> scores) {
  check_lengths(labels.size(), scores.size());
  check_binary(labels);
  const std::size_t n = labels.size();
  const auto positives =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::UndefinedMetric, "AUROC needs both classes");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mid-ranks over tie groups; twice the rank keeps the sum integral.
  double twice_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double twice_mid = static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) twice_rank_sum += twice_mid;
    }
    i = j + 1;
  }
  const auto p = static_cast<double>(positives);
  const double u = twice_rank_sum / 2.0 - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

double auprc(std::span<const int> labels, std::span<const double> scores) {
  check_lengths(labels.size(), scores.size());
  check_binary(labels);
  const std::size_t n = labels.size();
  const auto positives =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0) throw Error(ErrorCode::UndefinedMetric, "AUPRC needs at least one positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0.0;
  double tp = 0.0, fp = 0.0, prev_recall = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / static_cast<double>(positives);
    const double precision = tp / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

std::vector<int> threshold_predictions(std::span<const double> scores, double threshold) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
  return out;
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::WeightedF1: return "weighted_f1";
    case Metric::Auroc: return "auroc";
    case Metric::Auprc: return "auprc";
  }
  return "unknown";
}

std::optional<double> MetricTriple::get(Metric metric) const {
  switch (metric) {
    case Metric::WeightedF1: return weighted_f1;
    case Metric::Auroc: return auroc;
    case Metric::Auprc: return auprc;
  }
  return std::nullopt;
}

MetricTriple evaluate_scores(std::span<const int> labels, std::span<const double> scores) {
  MetricTriple m;
  const auto predictions = threshold_predictions(scores);
  m.weighted_f1 = weighted_f1(labels, predictions);
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives > 0 && static_cast<std::size_t>(positives) < labels.size()) {
    m.auroc = auroc(labels, scores);
  }
  if (positives > 0) m.auprc = auprc(labels, scores);
  return m;
}

TrainTestMatrix::TrainTestMatrix(int episodes)
    : t_(episodes), cells_(static_cast<std::size_t>(episodes * episodes)),
      filled_(static_cast<std::size_t>(episodes * episodes), 0) {
  if (episodes < 1) throw Error(ErrorCode::InvalidArgument, "matrix needs at least one episode");
}

std::size_t TrainTestMatrix::index(int train_session, int test_set) const {
  if (train_session < 0 || train_session >= t_ || test_set < 0 || test_set >= t_) {
    throw Error(ErrorCode::InvalidArgument, "matrix cell (" + std::to_string(train_session) + ", " +
                                                std::to_string(test_set) + ") out of range");
  }
  return static_cast<std::size_t>(train_session * t_ + test_set);
}

void TrainTestMatrix::set(int train_session, int test_set, MetricTriple value) {
  const auto idx = index(train_session, test_set);
  cells_[idx] = value;
  filled_[idx] = 1;
}

const MetricTriple& TrainTestMatrix::at(int train_session, int test_set) const {
  return cells_[index(train_session, test_set)];
}

bool TrainTestMatrix::populated(int train_session, int test_set) const {
  return filled_[index(train_session, test_set)] != 0;
}

bool TrainTestMatrix::complete() const {
  return t_ > 0 && std::all_of(filled_.begin(), filled_.end(), [](char f) { return f != 0; });
}

ClReport cl_report(const TrainTestMatrix& matrix, IlmVariant variant) {
  if (!matrix.complete()) throw Error(ErrorCode::IncompleteMatrix, "train-test matrix has unfilled cells");
  const int t = matrix.episodes();
  const int last = t - 1;
  ClReport report;
  report.ilm_variant = variant;
  for (Metric metric : kAllMetrics) {
    ClMetrics& out = report.per_metric[static_cast<int>(metric)];
    // Each skipped cell is counted once even if several averages would use it.
    std::vector<char> skipped(static_cast<std::size_t>(t * t), 0);
    auto value = [&](int i, int j) -> std::optional<double> {
      auto v = matrix.at(i, j).get(metric);
      if (!v) skipped[static_cast<std::size_t>(i * t + j)] = 1;
      return v;
    };

    double acc_sum = 0.0;
    int acc_n = 0;
    for (int j = 0; j < t; ++j) {
      if (auto v = value(last, j)) {
        acc_sum += *v;
        ++acc_n;
      }
    }
    out.acc = acc_n > 0 ? acc_sum / acc_n : 0.0;

    double ilm_sum = 0.0;
    if (variant == IlmVariant::LowerTriangular) {
      int ilm_n = 0;
      for (int i = 0; i < t; ++i) {
        for (int j = 0; j <= i; ++j) {
          if (auto v = value(i, j)) {
            ilm_sum += *v;
            ++ilm_n;
          }
        }
      }
      out.ilm = ilm_n > 0 ? ilm_sum / ilm_n : 0.0;
    } else {
      int rows = 0;
      for (int i = 0; i < t; ++i) {
        double row_sum = 0.0;
        int row_n = 0;
        for (int j = 0; j < t; ++j) {
          if (auto v = value(i, j)) {
            row_sum += *v;
            ++row_n;
          }
        }
        if (row_n > 0) {
          ilm_sum += row_sum / row_n;
          ++rows;
        }
      }
      out.ilm = rows > 0 ? ilm_sum / rows : 0.0;
    }

    if (t == 1) {
      out.bwt = 0.0;
      out.bwt_defined = false;
    } else {
      double bwt_sum = 0.0;
      int bwt_n = 0;
      for (int j = 0; j < last; ++j) {
        auto final_v = value(last, j);
        auto diag_v = value(j, j);
        if (final_v && diag_v) {
          bwt_sum += *final_v - *diag_v;
          ++bwt_n;
        }
      }
      out.bwt_defined = bwt_n > 0;
      out.bwt = bwt_n > 0 ? bwt_sum / bwt_n : 0.0;
    }
    out.excluded_cells = static_cast<int>(std::count(skipped.begin(), skipped.end(), 1));
  }
  return report;
}

}  // namespace aglr
