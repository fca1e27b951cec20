#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgeinfer/bundle.hpp"
#include "edgeinfer/datakit.hpp"
#include "edgeinfer/trainer.hpp"

namespace edgeinfer {

/// Rows are actual classes, columns predicted classes.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t size() const { return counts.size(); }
  std::size_t total() const;
  std::size_t trace() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Class names default to "0", "1", ...
ConfusionMatrix confusion(std::span<const int> actual, std::span<const int> predicted, int k,
                          std::vector<std::string> classes = {});

/// A metric that may be undefined; `reason` says why when it is.
struct Metric {
  std::optional<double> value;
  std::string reason;

  static Metric of(double v) { return {v, {}}; }
  static Metric absent(std::string why) { return {std::nullopt, std::move(why)}; }
};

struct BinaryCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct ClassMetrics {
  std::string name;
  BinaryCounts counts;
  Metric precision, recall, f1;
};

struct MetricsReport {
  int positive_class = 0;
  Metric accuracy, precision, recall, f1;
  /// One-vs-rest metrics for every class.
  std::vector<ClassMetrics> per_class;
  /// True when the headline precision/recall/F1 are unweighted macro
  /// averages (more than two classes).
  bool macro = false;
};

/// One-vs-rest counts of class `c`.
BinaryCounts binary_counts(const ConfusionMatrix& cm, int c);

/// accuracy = (TP+TN)/total, precision = TP/(TP+FP), recall = TP/(TP+FN),
/// F1 = 2PR/(P+R). Two classes report `positive_class`; more report macro
/// averages over the classes whose value is defined.
MetricsReport metrics(const ConfusionMatrix& cm, int positive_class = 0);
MetricsReport metrics_from_counts(const BinaryCounts& counts);

/// Mean and sample standard deviation of the defined values.
struct Aggregate {
  std::optional<double> mean;
  std::optional<double> sd;
  std::size_t n = 0;
};

Aggregate aggregate(std::span<const std::optional<double>> values);

struct FoldResult {
  int fold = 0;
  ConfusionMatrix cm;
  MetricsReport metrics;
  int best_epoch = 0;
};

struct CrossValidationReport {
  std::vector<FoldResult> folds;
  Aggregate accuracy, precision, recall, f1;
};

/// Per fold: train on the train partition, select on val, score on test.
/// `features` and `labels` cover every manifest item in order.
CrossValidationReport cross_validate(const FeatureMatrix& features, std::span<const int> labels, const SplitPlan& plan,
                                     const TrainConfig& cfg, const std::vector<std::string>& classes,
                                     int positive_class, unsigned threads = 1);

std::string confusion_grid(const ConfusionMatrix& cm);
std::string metrics_text(const MetricsReport& r);
std::string metrics_json(const ConfusionMatrix& cm, const MetricsReport& r);
std::string cross_validation_text(const CrossValidationReport& r);
std::string cross_validation_json(const CrossValidationReport& r);

/// Predicted class of every listed manifest item through a classifier bundle.
std::vector<int> predict_items(const ModelBundle& b, const DatasetManifest& m, std::span<const std::size_t> indices,
                               unsigned threads = 0);

}  // namespace edgeinfer
