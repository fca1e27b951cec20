#include <gtest/gtest.h>

#include <cmath>

#include "edgeinfer/engine.hpp"
#include "edgeinfer/fixtures.hpp"
#include "edgeinfer/trainer.hpp"
#include "support/gen.hpp"
#include "support/gradcheck.hpp"
#include "support/helpers.hpp"

using namespace edgeinfer;

namespace {

/// Two Gaussian blobs in `dims` dimensions, offset along every axis.
void blobs(testgen::Gen& g, std::size_t n, std::size_t dims, double sep, FeatureMatrix& x, std::vector<int>& y) {
  x = {n, dims, {}};
  y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    y.push_back(label);
    for (std::size_t d = 0; d < dims; ++d) {
      x.data.push_back(static_cast<float>(g.normal() + (label == 0 ? sep : -sep) + 10.0 * static_cast<double>(d)));
    }
  }
}

}  // namespace

TEST(Trainer, AnalyticGradientsMatchFiniteDifferences) {
  const auto r = testgen::gradient_check(50, 77);
  EXPECT_GT(r.parameters_checked, 500u);
  EXPECT_LE(r.worst_rel_error, 1e-4);
}

TEST(Trainer, BceClampsOnlyTheLoss) {
  const auto lg = bce_loss(1.0, 0);
  EXPECT_NEAR(lg.loss, -std::log(kProbabilityClamp), 1e-9);
  EXPECT_DOUBLE_EQ(lg.grad, 1.0);
  EXPECT_NEAR(bce_loss(0.25, 1).loss, -std::log(0.25), 1e-15);
  EXPECT_DOUBLE_EQ(bce_loss(0.25, 1).grad, -0.75);
}

TEST(Trainer, AdamFirstStepMovesByTheLearningRate) {
  // After bias correction the first update is lr * g / (|g| + eps).
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -4.0, 0.0};
  AdamState s;
  adam_step(p, g, s, 0.01);
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-12);
  EXPECT_NEAR(p[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-12);
  EXPECT_DOUBLE_EQ(p[2], 0.5);
  EXPECT_EQ(s.t, 1u);
}

TEST(Trainer, AdamMatchesAHandRolledRecurrence) {
  testgen::Gen gen(3);
  std::vector<double> p{0.2, -0.7}, q = p, m(2, 0.0), v(2, 0.0);
  AdamState s;
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 25; ++t) {
    const std::vector<double> g{gen.normal(), gen.normal()};
    adam_step(p, g, s, lr);
    for (int i = 0; i < 2; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      q[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  EXPECT_NEAR(p[0], q[0], 1e-12);
  EXPECT_NEAR(p[1], q[1], 1e-12);
}

TEST(Trainer, LearnsSeparableBlobsAndFoldsStandardisation) {
  testgen::Gen g(5);
  FeatureMatrix x, vx;
  std::vector<int> y, vy;
  blobs(g, 200, 6, 1.5, x, y);
  blobs(g, 80, 6, 1.5, vx, vy);
  const auto r = train_head(x, y, &vx, vy, 2, 0, {.batch_size = 16, .learning_rate = 0.01, .epochs = 15, .seed = 2});
  ASSERT_EQ(r.log.size(), 15u);
  EXPECT_GE(r.best_epoch, 1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < vx.rows; ++i) correct += head_predict(r.head, vx.row(i), 0) == vy[i] ? 1 : 0;
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(vx.rows), 0.95);
  // Best epoch: highest val accuracy, then lowest val loss.
  const auto& best = r.log[static_cast<std::size_t>(r.best_epoch - 1)];
  for (const auto& e : r.log) {
    EXPECT_LE(*e.val_accuracy, *best.val_accuracy);
    if (*e.val_accuracy == *best.val_accuracy) EXPECT_GE(*e.val_loss, *best.val_loss);
  }
}

TEST(Trainer, CategoricalHeadsLearnThreeClasses) {
  testgen::Gen g(6);
  FeatureMatrix x{300, 2, {}};
  std::vector<int> y;
  for (std::size_t i = 0; i < 300; ++i) {
    const int c = static_cast<int>(i % 3);
    y.push_back(c);
    x.data.push_back(static_cast<float>(g.normal() * 0.4 + 3 * std::cos(c * 2.1)));
    x.data.push_back(static_cast<float>(g.normal() * 0.4 + 3 * std::sin(c * 2.1)));
  }
  const auto r = train_head(x, y, nullptr, {}, 3, 0,
                            {.batch_size = 32, .learning_rate = 0.05, .epochs = 30,
                             .loss = LossKind::kCategoricalCrossEntropy, .seed = 1});
  EXPECT_EQ(r.head.out, 3u);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.rows; ++i) correct += head_predict(r.head, x.row(i)) == y[i] ? 1 : 0;
  EXPECT_GE(correct, 285u);
}

TEST(Trainer, TrainingIsDeterministicPerSeed) {
  testgen::Gen g(7);
  FeatureMatrix x;
  std::vector<int> y;
  blobs(g, 64, 4, 0.5, x, y);
  const TrainConfig cfg{.batch_size = 8, .epochs = 5, .seed = 9};
  const auto a = train_head(x, y, nullptr, {}, 2, 0, cfg);
  const auto b = train_head(x, y, nullptr, {}, 2, 0, cfg);
  EXPECT_EQ(a.head.w, b.head.w);
  EXPECT_EQ(a.head.b, b.head.b);
}

TEST(Trainer, InputErrors) {
  FeatureMatrix x{4, 2, {1, 2, 3, 4, 5, 6, 7, 8}};
  const std::vector<int> y{0, 1, 0, 1};
  EXPECT_ERROR_CODE(train_head(x, std::vector<int>{0, 1}, nullptr, {}, 2, 0, {}), ErrorCode::kLengthMismatch);
  EXPECT_ERROR_CODE(train_head(x, std::vector<int>{0, 1, 2, 0}, nullptr, {}, 2, 0, {}), ErrorCode::kLabelOutOfRange);
  FeatureMatrix bad{4, 3, std::vector<float>(12, 1.0f)};
  const std::vector<std::size_t> rows{0};
  Head h{2, 1, {0, 0}, {0}};
  EXPECT_ERROR_CODE(head_loss(h, bad, y, LossKind::kBinaryCrossEntropy, rows), ErrorCode::kWidthMismatch);
  EXPECT_ERROR_CODE(parse_loss_kind("hinge"), ErrorCode::kInvalidArgument);
}

TEST(Trainer, AttachedHeadReproducesHeadLogits) {
  const auto backbone = micro_mobilenet({.seed = 4});
  testgen::Gen g(8);
  Head h{kMicroMobileNetFeatures, 1, {}, {0.25}};
  for (int i = 0; i < kMicroMobileNetFeatures; ++i) h.w.push_back(g.normal() * 0.1);
  const auto model = attach_head(backbone, h);
  ASSERT_EQ(model.graph.outputs.size(), 1u);
  const auto x = g.tensor({1, 32, 32, 3});
  const auto feat = run_forward(backbone, x, {.targets = {"pool"}}).at("pool");
  const double want = h.logits(feat.f32())[0];
  const double got = run_outputs(model, x).at(0).f32()[0];
  EXPECT_NEAR(got, want, 1e-5 * std::max(1.0, std::abs(want)));
  EXPECT_ERROR_CODE(attach_head(backbone, Head{3, 1, {0, 0, 0}, {0}}), ErrorCode::kWidthMismatch);
}

TEST(Trainer, FeatureCacheAvoidsRepeatForwards) {
  testgen::TempDir dir("feat");
  const auto m = synthesize(dir / "raw", {.per_class = 3, .size = 32, .seed = 1});
  auto backbone = micro_mobilenet({.seed = 1});
  backbone.meta.preprocess = {.height = 32, .width = 32, .value_range = ValueRange::kMinusOneOne};
  FeatureExtractor first(backbone, {.cache_dir = dir / "cache", .threads = 1});
  const auto a = first.extract(m);
  EXPECT_EQ(first.forward_count(), 6u);
  EXPECT_EQ(a.rows, 6u);
  EXPECT_EQ(a.cols, static_cast<std::size_t>(kMicroMobileNetFeatures));
  FeatureExtractor second(backbone, {.cache_dir = dir / "cache", .threads = 1});
  const auto b = second.extract(m);
  EXPECT_EQ(second.forward_count(), 0u);
  EXPECT_EQ(a.data, b.data);
}
