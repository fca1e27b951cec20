#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "edgeinfer/datakit.hpp"
#include "support/gen.hpp"
#include "support/helpers.hpp"

using namespace edgeinfer;

namespace {

/// In-memory manifest with `counts[c]` originals per class (no files).
DatasetManifest synthetic_manifest(const std::vector<std::size_t>& counts) {
  DatasetManifest m;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    m.classes.push_back("class" + std::to_string(c));
    for (std::size_t i = 0; i < counts[c]; ++i) {
      m.items.push_back({"class" + std::to_string(c) + "/img" + std::to_string(i) + ".png", static_cast<int>(c),
                         Origin::kOriginal, 0, std::nullopt});
    }
  }
  m.base_dir = "/nonexistent";
  return m;
}

std::size_t round_half_up_div(std::size_t a, std::size_t b) { return (2 * a + b) / (2 * b); }

}  // namespace

TEST(Datakit, AugmentMultipliesByTheFactor) {
  const auto m = augment(synthetic_manifest({102, 126}), 14, 3);
  EXPECT_EQ(m.class_counts(), (std::vector<std::size_t>{1428, 1764}));
  EXPECT_EQ(m.original_count(), 228u);
  EXPECT_EQ(m.items.size(), 3192u);
  // Re-augmenting replaces instead of compounding.
  EXPECT_EQ(augment(m, 14, 3), m);
  EXPECT_EQ(augment(m, 2, 3).items.size(), 456u);
  EXPECT_EQ(augment(m, 1, 3).items.size(), 228u);
  EXPECT_THROW(augment(m, 0, 3), Error);
}

TEST(Datakit, AugmentedItemsFollowTheirOriginal) {
  const auto m = augment(synthetic_manifest({5, 7}), 4, 9);
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    const auto& it = m.items[i];
    const auto root = m.origin_of(i);
    EXPECT_EQ(m.items[root].origin, Origin::kOriginal);
    EXPECT_EQ(m.items[root].class_index, it.class_index);
    if (it.origin == Origin::kAugmented) EXPECT_EQ(it.parent, root);
  }
}

TEST(Datakit, PartitionSizesRoundHalfUp) {
  for (std::size_t n = 0; n < 500; ++n) {
    const auto s = partition_sizes(n);
    EXPECT_EQ(s.test, round_half_up_div(n, 10)) << n;
    EXPECT_EQ(s.val, round_half_up_div(n, 5)) << n;
    EXPECT_EQ(s.train + s.val + s.test, n);
  }
}

TEST(Datakit, SplitIsStratifiedAndLeakFree) {
  testgen::Gen g(21);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::size_t> counts;
    const auto k = g.range(2, 4);
    for (int c = 0; c < k; ++c) counts.push_back(static_cast<std::size_t>(g.range(5, 150)));
    const auto m = augment(synthetic_manifest(counts), static_cast<int>(g.range(1, 6)), g.range(0, 1000));
    const int folds = static_cast<int>(g.range(2, 5));
    const auto plan = split(m, folds, static_cast<std::uint64_t>(trial));
    ASSERT_EQ(plan.assignment.size(), static_cast<std::size_t>(folds));
    for (int f = 0; f < folds; ++f) {
      for (std::size_t c = 0; c < counts.size(); ++c) {
        std::size_t got[3] = {0, 0, 0};
        for (std::size_t i = 0; i < m.items.size(); ++i) {
          if (m.items[i].origin == Origin::kOriginal && m.items[i].class_index == static_cast<int>(c)) {
            ++got[static_cast<int>(plan.assignment[f][i])];
          }
        }
        const double n = static_cast<double>(counts[c]);
        EXPECT_LE(std::abs(static_cast<double>(got[0]) - 0.7 * n), 1.0);
        EXPECT_LE(std::abs(static_cast<double>(got[1]) - 0.2 * n), 1.0);
        EXPECT_LE(std::abs(static_cast<double>(got[2]) - 0.1 * n), 1.0);
      }
      for (std::size_t i = 0; i < m.items.size(); ++i) {
        ASSERT_EQ(plan.assignment[f][i], plan.assignment[f][m.origin_of(i)]);
      }
    }
  }
}

TEST(Datakit, SplitIsDeterministicAndSeedSensitive) {
  const auto m = augment(synthetic_manifest({60, 40}), 3, 1);
  EXPECT_EQ(split(m, 5, 42), split(m, 5, 42));
  EXPECT_NE(split(m, 5, 42), split(m, 5, 43));
  const auto plan = split(m, 5, 42);
  EXPECT_NE(plan.assignment[0], plan.assignment[1]);
  const auto test = plan.indices(0, Partition::kTest);
  const auto train = plan.indices(0, Partition::kTrain);
  const auto val = plan.indices(0, Partition::kVal);
  EXPECT_EQ(test.size() + train.size() + val.size(), m.items.size());
}

TEST(Datakit, TooSmallClassesAreRejected) {
  EXPECT_ERROR_CODE(split(synthetic_manifest({10, 2}), 5, 1), ErrorCode::kClassTooSmall);
  EXPECT_ERROR_CODE(split(synthetic_manifest({}), 5, 1), ErrorCode::kEmptyDataset);
  EXPECT_ERROR_CODE(split(synthetic_manifest({10, 10}), 1, 1), ErrorCode::kInvalidArgument);
}

TEST(Datakit, AugmentationDrawsStayInRange) {
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const auto d = draw_augmentation(s);
    ASSERT_LE(std::abs(d.rotation_deg), 30.0);
    ASSERT_GE(d.contrast, 0.7);
    ASSERT_LE(d.contrast, 1.3);
    ASSERT_GE(d.zoom, 0.8);
    ASSERT_LE(d.zoom, 1.2);
  }
  EXPECT_EQ(draw_augmentation(5).rotation_deg, draw_augmentation(5).rotation_deg);
}

TEST(Datakit, IdentityAugmentationKeepsPixels) {
  const auto img = synth_image(0, 4, 32);
  EXPECT_EQ(apply_augmentation(img, {}), img);
  const auto rotated = apply_augmentation(img, {.rotation_deg = 20, .contrast = 1.1, .zoom = 0.9});
  EXPECT_EQ(rotated.width, img.width);
  EXPECT_NE(rotated, img);
}

TEST(Datakit, ManifestTableRoundTrips) {
  const auto m = augment(synthetic_manifest({4, 3}), 3, 8);
  const auto text = manifest_table(m);
  EXPECT_EQ(text.rfind("#edgeinfer-dataset v1", 0), 0u);
  EXPECT_EQ(parse_manifest_table(text, m.base_dir), m);
  EXPECT_ERROR_CODE(parse_manifest_table("#edgeinfer-dataset v1\n#classes\ta\tb\nx.png\tseven\toriginal\t0\t-\n", "/"),
                    ErrorCode::kParseError);
}

TEST(Datakit, IngestSynthesizeMaterializeAndReload) {
  testgen::TempDir dir("data");
  const auto m = synthesize(dir / "raw", {.per_class = 6, .size = 24, .seed = 3});
  EXPECT_EQ(m.classes, kSynthClasses);
  EXPECT_EQ(m.items.size(), 12u);
  // Stray files are skipped, unreadable images reported.
  std::ofstream(dir / "raw" / "Others" / "notes.txt") << "x";
  std::ofstream(dir / "raw" / "Others" / "broken.png") << "not a png";
  const auto again = ingest(dir / "raw");
  EXPECT_EQ(again.manifest.items.size(), 12u);
  EXPECT_EQ(again.skipped.size(), 1u);
  EXPECT_EQ(again.unreadable.size(), 1u);

  auto aug = augment(again.manifest, 3, 5);
  aug = rebase(aug, dir.path());
  aug.base_dir = dir.path();
  const auto rendered = load_item(aug, 1);
  materialize(aug);
  EXPECT_EQ(load_item(aug, 1), rendered);
  save_manifest(aug, dir / "manifest.tsv");
  const auto loaded = load_manifest(dir / "manifest.tsv");
  EXPECT_EQ(loaded.items.size(), aug.items.size());
  EXPECT_EQ(load_item(loaded, 0), load_item(aug, 0));
}

TEST(Datakit, IngestErrors) {
  testgen::TempDir dir("ingest");
  EXPECT_ERROR_CODE(ingest(dir.path()), ErrorCode::kEmptyDataset);
  std::filesystem::create_directories(dir / "a");
  std::filesystem::create_directories(dir / "b");
  write_png(synth_image(0, 1, 8), dir / "a" / "x.png");
  EXPECT_ERROR_CODE(ingest(dir.path()), ErrorCode::kEmptyClassDirectory);
}

TEST(Datakit, SynthImagesAreDeterministic) {
  EXPECT_EQ(synth_image(0, 11, 40), synth_image(0, 11, 40));
  EXPECT_NE(synth_image(0, 11, 40), synth_image(0, 12, 40));
  EXPECT_NE(synth_image(0, 11, 40), synth_image(1, 11, 40));
}

TEST(Datakit, SplitTableNumbersFoldsFromOne) {
  const auto m = synthetic_manifest({10, 10});
  const auto plan = split(m, 3, 1);
  std::istringstream in(split_table(m, plan));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "fold\titem\tpath\tpartition");
  std::set<std::string> folds;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    folds.insert(line.substr(0, line.find('\t')));
    ++rows;
  }
  EXPECT_EQ(folds, (std::set<std::string>{"1", "2", "3"}));
  EXPECT_EQ(rows, 3 * m.items.size());
}
