#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "edgeinfer/tensor.hpp"

namespace edgeinfer {

/// The executable operator set. Names follow the TensorFlow graph vocabulary.
enum class OpKind : std::uint8_t {
  kInput,
  kConst,
  kConv2D,
  kDepthwiseConv2D,
  kMatMul,
  kAddV2,
  kMul,
  kRelu6,
  kMean,
  kPad,
  kCast,
  kIdentity,
};

inline constexpr std::array<OpKind, 12> kAllOpKinds = {
    OpKind::kInput, OpKind::kConst, OpKind::kConv2D, OpKind::kDepthwiseConv2D, OpKind::kMatMul, OpKind::kAddV2,
    OpKind::kMul,   OpKind::kRelu6, OpKind::kMean,   OpKind::kPad,             OpKind::kCast,   OpKind::kIdentity,
};

std::string_view to_string(OpKind op);

/// Maps a serialized op name to an OpKind. "Placeholder" reads as Input and
/// "DepthwiseConv2dNative" as DepthwiseConv2D. Returns nullopt for unknown
/// names (including "NoOp", which importers drop before calling this).
std::optional<OpKind> parse_op_kind(std::string_view name);

enum class Padding : std::uint8_t { kValid, kSame };

struct NodeAttrs {
  std::array<int, 2> strides{1, 1};
  Padding padding = Padding::kValid;
  std::optional<DType> cast_to;
  std::vector<int> axes;
  bool keep_dims = false;
  std::vector<std::pair<std::int64_t, std::int64_t>> pads;
  /// Output activation scale of an INT8 node (and of a Cast to INT8).
  std::optional<float> out_scale;

  friend bool operator==(const NodeAttrs&, const NodeAttrs&) = default;
};

struct Node {
  std::string id;
  OpKind op = OpKind::kIdentity;
  std::vector<std::string> inputs;
  NodeAttrs attrs;
  std::optional<std::size_t> weight_ref;

  friend bool operator==(const Node&, const Node&) = default;
};

struct InputSpec {
  std::string node_id;
  Shape shape;
  DType dtype = DType::kFP32;

  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

struct Graph {
  std::vector<Node> nodes;  // topological order once validated
  std::vector<std::string> outputs;
  std::vector<InputSpec> inputs;
  DType output_dtype = DType::kFP32;

  const Node* find(std::string_view id) const;
  Node* find(std::string_view id);
  const InputSpec* input_spec(std::string_view id) const;
  bool is_output(std::string_view id) const;
  /// Ids of the nodes that take `id` as an input, in graph order.
  std::vector<std::string> consumers(std::string_view id) const;
  /// An id not yet used in the graph, derived from `base`.
  std::string fresh_id(std::string_view base) const;

  friend bool operator==(const Graph&, const Graph&) = default;
};

/// Number of inputs an op takes (Pad takes its amounts as attributes).
std::size_t expected_arity(OpKind op);

/// Checks ids, references, arity and weight refs, then returns the graph in
/// stable topological order. Throws dangling-reference, arity-violation,
/// cycle or invalid-argument with the offending node id as subject.
Graph validate_graph(Graph g, std::size_t weight_count);

/// Drops nodes (other than Inputs) that no output depends on.
Graph prune_unreachable(Graph g);

using ShapeMap = std::unordered_map<std::string, Shape>;

/// Concrete output shape of every node. `input_shapes` overrides the
/// declared input specs (used when the leading batch extent differs).
ShapeMap infer_shapes(const Graph& g, std::span<const Tensor> weights,
                      const std::unordered_map<std::string, Shape>& input_shapes = {});

/// Output element type of every node.
std::unordered_map<std::string, DType> infer_dtypes(const Graph& g, std::span<const Tensor> weights);

/// Output shape of a single node given its input shapes.
Shape infer_node_shape(const Node& node, std::span<const Shape> input_shapes);

using OpCensus = std::map<OpKind, std::size_t>;

OpCensus op_census(const Graph& g);
std::size_t census_total(const OpCensus& census);
std::size_t census_count(const OpCensus& census, OpKind op);

}  // namespace edgeinfer
