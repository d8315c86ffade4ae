#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fmdroid/feature_model.hpp"
#include "fmdroid/fm_core.hpp"

namespace fmdroid {

struct Confusion {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + tn + fp + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

Confusion confusion(std::span<const Label> labels, std::span<const Label> predictions);

// Bits of Metrics::undefined: which ratios had a zero denominator.
enum MetricFlag : unsigned {
  kPrecisionUndefined = 1u << 0,
  kRecallUndefined = 1u << 1,
  kF1Undefined = 1u << 2,
  kFprUndefined = 1u << 3,
};

/// Detection metrics. Ratios with a zero denominator are reported as 0 and
/// flagged in `undefined`.
struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  unsigned undefined = 0;

  bool is_undefined(MetricFlag flag) const noexcept { return (undefined & flag) != 0; }
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// F1 is evaluated as 2tp / (2tp + fp + fn), the count form of
/// 2PR / (P + R), so every ratio is a single correctly rounded division.
Metrics metrics(const Confusion& c);

struct RocPoint {
  double threshold = 0.0;  // +inf for the (0, 0) anchor
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // threshold descending, from (0,0) to (1,1)
  double auc = 0.0;
};

/// Threshold sweep over the distinct scores (ties grouped), trapezoidal AUC.
RocCurve roc(std::span<const Label> labels, std::span<const double> scores);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Row-index split. When stratified, each class contributes
/// round(count * test_fraction) rows to the test part, clamped to
/// [1, count - 1].
Split split_train_test(std::span<const Label> labels, double test_fraction, std::uint64_t seed,
                       bool stratified = true);

/// Stratified split over arbitrary group keys (e.g. family names).
Split split_by_group(std::span<const std::string> groups, double test_fraction,
                     std::uint64_t seed);

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                        double test_fraction, std::uint64_t seed,
                                                        bool stratified = true);

/// k disjoint, sorted index lists. Each class is shuffled and dealt
/// round-robin starting at fold 0.
std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const Label> labels,
                                                       std::size_t k, std::uint64_t seed);

/// Predictions and probabilities for a trained FM over a dataset.
std::vector<double> predict_all(const FmModel& model, const LabeledDataset& ds);
std::vector<Label> classify_all(std::span<const double> probabilities, double threshold = 0.5);

struct FoldResult {
  std::size_t fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  Confusion confusion;
  Metrics metrics;
  double auc = 0.0;
};

/// Trains on k-1 folds and scores the held-out fold, for every fold.
std::vector<FoldResult> cross_validate(const LabeledDataset& ds, const TrainConfig& cfg,
                                       const InteractionMask& mask, std::size_t folds,
                                       std::uint64_t split_seed, double threshold = 0.5);

struct FamilyRow {
  std::string family;
  std::size_t samples = 0;  // occurrences in the whole dataset
  std::size_t test_samples = 0;
  bool evaluated = false;
  std::string note;  // reason when skipped
  Confusion confusion;
  Metrics metrics;
};

struct FamilyReport {
  std::vector<FamilyRow> rows;  // sorted by family name
  Metrics average;              // macro average over evaluated rows
  std::size_t evaluated_count = 0;
};

struct FamilyEvalConfig {
  TrainConfig train;
  InteractionMask mask = InteractionMask::full();
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
  double threshold = 0.5;
  std::size_t min_samples = 10;
  std::size_t jobs = 1;
};

/// Family of each sample, with unlabeled clean samples mapped to "clean".
std::vector<std::string> effective_families(const LabeledDataset& ds);

/// One-vs-rest FM per family (clean counts as the family "clean"): train on
/// a family-stratified split, score the held-out part. Family i is trained
/// with seed train.seed + i.
FamilyReport evaluate_families(const LabeledDataset& ds, const FamilyEvalConfig& cfg);

// CSV writers.
void write_metrics_csv(const Confusion& c, const Metrics& m, const RocCurve* curve,
                       std::ostream& out);
void write_roc_csv(const RocCurve& curve, std::ostream& out);
void write_family_csv(const FamilyReport& report, std::ostream& out);
void write_cv_csv(std::span<const FoldResult> folds, std::ostream& out);

/// Shortest decimal that round-trips the double.
std::string format_double(double value);

}  // namespace fmdroid
