#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "edgeinfer/bundle.hpp"
#include "edgeinfer/image.hpp"
#include "edgeinfer/tensor.hpp"

namespace edgeinfer {

using ValueMap = std::unordered_map<std::string, Tensor>;

struct ForwardOptions {
  /// Nodes to compute; empty means the graph outputs. Only their ancestors run.
  std::vector<std::string> targets;
};

/// Executes the graph. The result holds every computed (non-Const) node.
/// The input's leading batch extent may differ from the declared spec.
ValueMap run_forward(const ModelBundle& b, const std::unordered_map<std::string, Tensor>& inputs,
                     const ForwardOptions& options = {});

/// One node's output from its operand tensors (Consts included) and the
/// inferred output shape.
Tensor evaluate_node(const Node& node, const std::vector<const Tensor*>& inputs, const Shape& out_shape);

/// Single-input convenience overload.
ValueMap run_forward(const ModelBundle& b, const Tensor& input, const ForwardOptions& options = {});

/// Values of the graph outputs, in graph output order.
std::vector<Tensor> run_outputs(const ModelBundle& b, const Tensor& input);

/// Bilinear resize (half-pixel centers) and value mapping to a (1, H, W, 3)
/// FP32 tensor.
Tensor preprocess(const Image& img, const PreprocessSpec& spec);
Tensor preprocess(std::span<const std::uint8_t> image_bytes, const PreprocessSpec& spec);

/// Concatenates (1, H, W, C) tensors along the batch axis.
Tensor stack_batch(std::span<const Tensor> items);

struct Prediction {
  std::string label;
  int class_index = 0;
  double confidence = 0.0;
  std::vector<float> outputs;  // raw logit(s)
  double latency_ms = 0.0;
};

/// Turns raw head outputs into a label. One output means a sigmoid head for
/// `positive_class` (ties at 0.5 go to the positive class); more outputs
/// mean softmax over `classes`.
Prediction postprocess(std::span<const float> outputs, const std::vector<std::string>& classes, int positive_class);

double sigmoid(double x) noexcept;

/// Preprocess, run (timed, forward only) and postprocess one image.
Prediction predict(const ModelBundle& b, std::span<const std::uint8_t> image_bytes);
Prediction predict(const ModelBundle& b, const Image& img);

}  // namespace edgeinfer
