#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgeinfer/graph.hpp"
#include "edgeinfer/tensor.hpp"

namespace edgeinfer {

inline constexpr int kBundleFormatMajor = 1;
inline constexpr int kBundleFormatMinor = 0;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kWeightsFile = "weights.bin";

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(std::span<const std::uint8_t> bytes);

enum class ValueRange : std::uint8_t { kZeroOne, kMinusOneOne };

std::string_view to_string(ValueRange range);
ValueRange parse_value_range(std::string_view text);

/// How raw images become model input. Stored in the manifest so that
/// serving, evaluation and benchmarking preprocess identically.
struct PreprocessSpec {
  int height = 224;
  int width = 224;
  ValueRange value_range = ValueRange::kMinusOneOne;
  // Only bilinear resizing exists.

  friend bool operator==(const PreprocessSpec&, const PreprocessSpec&) = default;
};

struct BundleMetadata {
  std::string name;
  /// "fp32" (original), "fp32opt", "fp16" or "int8".
  std::string variant = "fp32";
  std::vector<std::string> classes;
  int positive_class = 0;
  PreprocessSpec preprocess;
  std::string created;
  /// Pooled-feature node that a classifier head attaches to.
  std::optional<std::string> feature_node;

  friend bool operator==(const BundleMetadata&, const BundleMetadata&) = default;
};

/// Graph + weights + metadata. Construct with `make_bundle`, which validates
/// the graph and computes the weight-blob checksum.
struct ModelBundle {
  BundleMetadata meta;
  Graph graph;
  std::vector<Tensor> weights;
  Digest checksum{};

  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

ModelBundle make_bundle(BundleMetadata meta, Graph graph, std::vector<Tensor> weights);

/// Adds a tensor to the weight table and returns its index.
std::size_t add_weight(std::vector<Tensor>& weights, Tensor t);

struct WeightEntry {
  std::size_t offset = 0;
  std::size_t length = 0;
  /// INT8 only: offset and count of the float32 scale table in the blob.
  std::size_t scales_offset = 0;
  std::size_t scales_count = 0;
};

struct SerializedWeights {
  std::vector<std::uint8_t> blob;
  std::vector<WeightEntry> entries;
};

/// Little-endian weight blob: each tensor's payload in table order, INT8
/// tensors followed by their float32 scale table.
SerializedWeights serialize_weights(std::span<const Tensor> weights);

/// Manifest document text exactly as `save_bundle` writes it.
std::string manifest_text(const ModelBundle& b);

void save_bundle(const ModelBundle& b, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

struct BundleSize {
  std::size_t container_bytes = 0;  // manifest + weights blob
  std::size_t payload_bytes = 0;    // weights blob only
};

BundleSize size_of(const ModelBundle& b);
BundleSize size_of(const std::filesystem::path& dir);

/// Current UTC time as ISO-8601, or SOURCE_DATE_EPOCH when set.
std::string creation_timestamp();

}  // namespace edgeinfer
