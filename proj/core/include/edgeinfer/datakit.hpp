#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edgeinfer/image.hpp"

namespace edgeinfer {

enum class Origin : std::uint8_t { kOriginal, kAugmented };

std::string_view to_string(Origin origin);

struct DatasetItem {
  /// Relative paths resolve against the manifest's base directory.
  std::string path;
  int class_index = 0;
  Origin origin = Origin::kOriginal;
  std::uint64_t seed = 0;
  /// Augmented items: index of the original they derive from.
  std::optional<std::size_t> parent;

  friend bool operator==(const DatasetItem&, const DatasetItem&) = default;
};

struct DatasetManifest {
  std::vector<std::string> classes;
  std::vector<DatasetItem> items;
  std::filesystem::path base_dir;

  std::vector<std::size_t> class_counts() const;
  std::size_t original_count() const;
  std::filesystem::path resolve(const DatasetItem& item) const;
  /// Index of the original an item belongs to (itself for originals).
  std::size_t origin_of(std::size_t index) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct IngestResult {
  DatasetManifest manifest;
  /// Files skipped because they are not PNG/JPEG by name.
  std::vector<std::string> skipped;
  /// Image-named files that failed to decode (excluded, not fatal).
  std::vector<std::string> unreadable;
};

/// One subdirectory per class under `root`, sorted by class then file name.
/// Throws empty-dataset when nothing is found, empty-class-directory when a
/// class folder holds no usable image.
IngestResult ingest(const std::filesystem::path& root, bool verify_decode = true);

struct AugmentRanges {
  double max_rotation_deg = 30.0;
  double contrast_lo = 0.7;
  double contrast_hi = 1.3;
  double zoom_lo = 0.8;
  double zoom_hi = 1.2;
};

struct AugmentDraw {
  double rotation_deg = 0.0;
  double contrast = 1.0;
  double zoom = 1.0;
};

AugmentDraw draw_augmentation(std::uint64_t seed, const AugmentRanges& ranges = {});

/// Rotation about the centre, zoom, then per-channel contrast around the
/// channel mean. Samples outside the source clamp to the edge.
Image apply_augmentation(const Image& src, const AugmentDraw& draw);

/// Each original is followed by factor-1 seeded augmentations; existing
/// augmented items are replaced. Augmented paths name the PNG that
/// `materialize` writes (`augmented/<class>/<stem>_aug<k>.png`).
DatasetManifest augment(const DatasetManifest& m, int factor, std::uint64_t seed);

/// Pixels of item `index`. Augmented items are read from disk when their
/// file exists and rendered from the original otherwise.
Image load_item(const DatasetManifest& m, std::size_t index, const AugmentRanges& ranges = {});

/// Writes every augmented item as PNG below `m.base_dir`.
void materialize(const DatasetManifest& m, const AugmentRanges& ranges = {});

/// Text form: `#edgeinfer-dataset v1`, a `#classes` line, then one
/// tab-separated row per item (path, class, origin, seed, parent).
std::string manifest_table(const DatasetManifest& m);
DatasetManifest parse_manifest_table(const std::string& text, const std::filesystem::path& base_dir);
/// Rewrites relative item paths so they resolve against `new_base`.
DatasetManifest rebase(const DatasetManifest& m, const std::filesystem::path& new_base);
/// Saves with paths relative to the file's directory.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& file);
DatasetManifest load_manifest(const std::filesystem::path& file);

enum class Partition : std::uint8_t { kTrain, kVal, kTest };

std::string_view to_string(Partition p);

struct SplitPlan {
  int fold_count = 0;
  std::uint64_t seed = 0;
  /// assignment[fold][item]
  std::vector<std::vector<Partition>> assignment;

  std::vector<std::size_t> indices(int fold, Partition p) const;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// Partition sizes for a class of n originals: test round(n/10), val
/// round(n/5), the rest train (rounding half up).
struct PartitionSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};
PartitionSizes partition_sizes(std::size_t n);

/// Per fold and class, an independent seeded shuffle of the originals cut
/// 70/20/10. Augmented items follow their original.
SplitPlan split(const DatasetManifest& m, int folds, std::uint64_t seed);

/// Tab-separated: fold, item, path, partition.
std::string split_table(const DatasetManifest& m, const SplitPlan& plan);

struct SynthOptions {
  std::size_t per_class = 250;
  int size = 64;
  std::uint64_t seed = 1;
};

inline const std::vector<std::string> kSynthClasses{"Monkeypox", "Others"};

/// Class 0: round reddish pustules with pale centres on reddened skin.
/// Class 1: irregular brownish patches on plain skin. Both with noise.
Image synth_image(int class_index, std::uint64_t seed, int size = 64);

/// Writes `<out>/<class>/<class>_NNNN.png` and returns the ingested manifest.
DatasetManifest synthesize(const std::filesystem::path& out, const SynthOptions& options);

}  // namespace edgeinfer
