#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgeinfer/bundle.hpp"

namespace edgeinfer {

struct MicroMobileNetOptions {
  std::uint64_t seed = 1;
  int input_size = 32;
  /// Append a randomly initialised MatMul + bias head of this width (0 = none).
  int head_width = 0;
  std::vector<std::string> classes{"Monkeypox", "Others"};
  std::string name = "micro-mobilenet";
};

/// A small MobileNetV2-style backbone with randomly initialised weights:
/// a stride-2 stem, three inverted-residual blocks (the middle one with a
/// 6x expansion and stride 2), batch-norm expressed as Mul/AddV2 constants,
/// and a global Mean. The Mean node ("pool") is the feature node.
ModelBundle micro_mobilenet(const MicroMobileNetOptions& options = {});

/// Width of the pooled feature vector of `micro_mobilenet`.
inline constexpr int kMicroMobileNetFeatures = 64;

/// Input -> Identity -> output.
ModelBundle minimal_bundle(const Shape& input_shape = {1, 4});

}  // namespace edgeinfer
