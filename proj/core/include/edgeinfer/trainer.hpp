#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgeinfer/bundle.hpp"
#include "edgeinfer/datakit.hpp"

namespace edgeinfer {

enum class LossKind : std::uint8_t { kBinaryCrossEntropy, kCategoricalCrossEntropy };

std::string_view to_string(LossKind loss);
LossKind parse_loss_kind(std::string_view text);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  int folds = 5;
  int epochs = 50;
  AdamParams adam;
  LossKind loss = LossKind::kBinaryCrossEntropy;
  std::uint64_t seed = 1;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamParams& adam = {});

inline constexpr double kProbabilityClamp = 1e-7;

struct LossGrad {
  double loss = 0.0;
  /// Derivative with respect to the logit.
  double grad = 0.0;
};

/// Binary cross-entropy of probability `p` (clamped to [1e-7, 1-1e-7] for
/// the loss) against label `y`; the logit gradient is p - y.
LossGrad bce_loss(double p, int y);

/// Row-major feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  FeatureMatrix select(std::span<const std::size_t> indices) const;
};

/// Dense head: logits = x . w + b with w stored (in, out) row-major.
struct Head {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;
  std::vector<double> b;

  std::vector<double> logits(std::span<const float> x) const;
  std::size_t parameter_count() const { return w.size() + b.size(); }
};

/// Mean loss of the head over `rows` and its gradient with respect to the
/// parameters (w then b, flattened). Binary targets are 0/1; categorical
/// targets are class indices.
double head_loss(const Head& h, const FeatureMatrix& x, std::span<const int> targets, LossKind loss,
                 std::span<const std::size_t> rows, std::vector<double>* grad = nullptr);

/// Predicted class for binary (logit >= 0 -> positive) or categorical heads.
int head_predict(const Head& h, std::span<const float> x, int positive_class = 0);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
};

struct TrainResult {
  Head head;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

/// Labels are class indices. Binary loss trains one logit for
/// `positive_class`; categorical loss one logit per class. Features are
/// standardised internally and the standardisation is folded into the
/// returned head, which therefore consumes raw features. The epoch with the
/// best validation accuracy (then lowest validation loss) is returned.
TrainResult train_head(const FeatureMatrix& train, std::span<const int> train_labels, const FeatureMatrix* val,
                       std::span<const int> val_labels, int class_count, int positive_class, const TrainConfig& cfg);

/// Tab-separated: epoch, split, loss, accuracy.
std::string training_log_table(const std::vector<EpochLog>& log);

struct ExtractOptions {
  std::optional<std::filesystem::path> cache_dir;
  unsigned threads = 0;
};

/// Pooled-feature extraction through the bundle's feature node with an
/// optional on-disk cache keyed by bundle checksum and item identity.
class FeatureExtractor {
 public:
  FeatureExtractor(const ModelBundle& b, ExtractOptions options = {});

  FeatureMatrix extract(const DatasetManifest& m, std::span<const std::size_t> indices);
  FeatureMatrix extract(const DatasetManifest& m);
  std::vector<float> features_of(const Image& img) const;

  /// Forward passes executed so far (cache hits excluded).
  std::size_t forward_count() const { return forwards_.load(); }
  std::size_t width() const { return width_; }

 private:
  const ModelBundle& bundle_;
  ExtractOptions options_;
  std::string feature_node_;
  std::size_t width_ = 0;
  mutable std::atomic<std::size_t> forwards_{0};
};

/// Appends Const w, MatMul, Const b and AddV2 after the feature node; the
/// AddV2 becomes the only graph output.
ModelBundle attach_head(const ModelBundle& b, const Head& head);

}  // namespace edgeinfer
