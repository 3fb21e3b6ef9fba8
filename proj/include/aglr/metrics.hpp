#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace aglr {

// Support-weighted mean of per-class F1 (binary labels).
double weighted_f1(std::span<const int> labels, std::span<const int> predictions);

// Mann-Whitney probability that a positive outranks a negative, ties 1/2.
// Throws UndefinedMetric when either class is absent.
double auroc(std::span<const int> labels, std::span<const double> scores);

// Step-wise area under precision-recall: sum_k (R_k - R_{k-1}) P_k over
// descending distinct score thresholds. Throws UndefinedMetric without
// positives.
double auprc(std::span<const int> labels, std::span<const double> scores);

// score >= threshold -> class 1.
std::vector<int> threshold_predictions(std::span<const double> scores, double threshold = 0.5);

enum class Metric { WeightedF1 = 0, Auroc = 1, Auprc = 2 };
inline constexpr std::array<Metric, 3> kAllMetrics{Metric::WeightedF1, Metric::Auroc, Metric::Auprc};
std::string_view to_string(Metric metric);

// AUROC/AUPRC are absent when the test set lacks a class.
struct MetricTriple {
  double weighted_f1 = 0.0;
  std::optional<double> auroc;
  std::optional<double> auprc;

  std::optional<double> get(Metric metric) const;
  bool operator==(const MetricTriple&) const = default;
};

MetricTriple evaluate_scores(std::span<const int> labels, std::span<const double> scores);

// Cell (i, j): performance on test set j after training session i. Indices
// are 0-based here; file formats and reports use 1-based episodes.
class TrainTestMatrix {
 public:
  TrainTestMatrix() = default;
  explicit TrainTestMatrix(int episodes);

  int episodes() const noexcept { return t_; }
  void set(int train_session, int test_set, MetricTriple value);
  const MetricTriple& at(int train_session, int test_set) const;
  bool populated(int train_session, int test_set) const;
  bool complete() const;

  bool operator==(const TrainTestMatrix&) const = default;

 private:
  std::size_t index(int train_session, int test_set) const;

  int t_ = 0;
  std::vector<MetricTriple> cells_;
  std::vector<char> filled_;
};

enum class IlmVariant {
  // Mean over every session i of the cells j <= i (seen test sets).
  LowerTriangular,
  // Mean over sessions of the row mean across all T test sets.
  FullRow,
};

struct ClMetrics {
  double acc = 0.0;
  double ilm = 0.0;
  double bwt = 0.0;
  // Undefined cells skipped while averaging.
  int excluded_cells = 0;
  bool bwt_defined = true;
};

struct ClReport {
  std::array<ClMetrics, 3> per_metric;
  bool ilm_applicable = true;
  bool bwt_applicable = true;
  IlmVariant ilm_variant = IlmVariant::LowerTriangular;

  const ClMetrics& of(Metric metric) const { return per_metric[static_cast<int>(metric)]; }
};

ClReport cl_report(const TrainTestMatrix& matrix, IlmVariant variant = IlmVariant::LowerTriangular);

}  // namespace aglr
