#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "edgeinfer/bundle.hpp"

namespace edgeinfer {

struct TensorRange {
  float min = 0.0f;
  float max = 0.0f;
  std::size_t sample_count = 0;

  friend bool operator==(const TensorRange&, const TensorRange&) = default;
};

/// Observed activation ranges keyed by node id.
struct CalibrationProfile {
  std::map<std::string, TensorRange> ranges;

  /// Running extrema; associative and commutative.
  void merge(const CalibrationProfile& other);
  /// Symmetric scale max(|min|, |max|) / 127 with a 1e-8 floor on the magnitude.
  float scale(const std::string& node_id) const;

  friend bool operator==(const CalibrationProfile&, const CalibrationProfile&) = default;
};

enum class CalibrationMethod { kMinMax, kPercentile };

struct CalibrationOptions {
  CalibrationMethod method = CalibrationMethod::kMinMax;
  /// Two-sided magnitude percentile used by kPercentile.
  double percentile = 99.9;
  /// Worker threads for the forwards (0 = hardware concurrency).
  unsigned threads = 0;
};

/// Runs every input through the FP32 bundle and records per-node ranges.
/// Each tensor counts as many samples as its leading batch extent.
CalibrationProfile calibrate(const ModelBundle& b, std::span<const Tensor> inputs, const CalibrationOptions& options = {});

/// Tab-separated table: node, min, max, samples.
std::string profile_table(const CalibrationProfile& p);
CalibrationProfile parse_profile_table(const std::string& text);

struct PrecisionPlan {
  DType target = DType::kINT8;
  /// Compute nodes kept at FP32.
  std::set<std::string> excluded;

  /// Precision a node computes in under this plan.
  DType precision_of(const Graph& g, const std::string& node_id) const;
};

/// Builds a plan for `target`. With a profile, nodes whose dynamic range
/// exceeds 127x the median range are excluded; `user_excluded` always is.
PrecisionPlan make_plan(const ModelBundle& b, DType target, const CalibrationProfile* profile = nullptr,
                        const std::set<std::string>& user_excluded = {});

/// Removes Identity nodes, folds all-constant subgraphs, folds Mul-by-const
/// into a preceding Conv2D/DepthwiseConv2D/MatMul and merges consecutive
/// constant Mul/AddV2 pairs, until nothing changes.
ModelBundle fuse_constants(const ModelBundle& b);

/// FP16 weights and compute, FP32 graph inputs and outputs.
ModelBundle convert_fp16(const ModelBundle& b, const PrecisionPlan& plan);

/// INT8 weights (per-channel for Conv2D/DepthwiseConv2D/MatMul) and
/// activations (per-tensor from the profile); biases stay FP32 and are
/// applied in 32-bit integers. FP32 graph inputs and outputs.
ModelBundle quantize_int8(const ModelBundle& b, const CalibrationProfile& profile, const PrecisionPlan& plan);

/// Per-channel symmetric INT8 weights along `axis`; channel c of the result
/// has scale max(max|w_c|, 1e-8) / 127.
Tensor quantize_weights_per_channel(const Tensor& w, int axis);
Tensor quantize_weights_per_tensor(const Tensor& w);

struct VariantSet {
  ModelBundle fp32opt;
  ModelBundle fp16;
  ModelBundle int8;
  CalibrationProfile profile;
  PrecisionPlan int8_plan;
};

/// Fuses, calibrates the fused graph on `calibration_inputs` and derives
/// the FP16 and INT8 variants from it.
VariantSet make_variants(const ModelBundle& original, std::span<const Tensor> calibration_inputs,
                         const CalibrationOptions& options = {}, const std::set<std::string>& user_excluded = {});

/// Directory suffix of a variant ("" for the original fp32 bundle).
std::string variant_suffix(const std::string& variant);

}  // namespace edgeinfer
