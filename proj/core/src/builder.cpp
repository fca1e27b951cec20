#include "edgeinfer/builder.hpp"

namespace edgeinfer {

std::string GraphBuilder::input(std::string id, Shape shape, DType dtype) {
  graph_.inputs.push_back({id, std::move(shape), dtype});
  return op(OpKind::kInput, std::move(id), {});
}

std::string GraphBuilder::constant(std::string id, Tensor value) {
  Node n{std::move(id), OpKind::kConst, {}, {}, add_weight(weights_, std::move(value))};
  graph_.nodes.push_back(n);
  return n.id;
}

std::string GraphBuilder::op(OpKind kind, std::string id, std::vector<std::string> inputs, NodeAttrs attrs) {
  graph_.nodes.push_back({id, kind, std::move(inputs), std::move(attrs), std::nullopt});
  return id;
}

std::string GraphBuilder::conv2d(std::string id, const std::string& x, Tensor kernel, std::array<int, 2> strides,
                                 Padding padding) {
  const auto k = constant(id + "/kernel", std::move(kernel));
  NodeAttrs a;
  a.strides = strides;
  a.padding = padding;
  return op(OpKind::kConv2D, std::move(id), {x, k}, a);
}

std::string GraphBuilder::depthwise(std::string id, const std::string& x, Tensor kernel, std::array<int, 2> strides,
                                    Padding padding) {
  const auto k = constant(id + "/kernel", std::move(kernel));
  NodeAttrs a;
  a.strides = strides;
  a.padding = padding;
  return op(OpKind::kDepthwiseConv2D, std::move(id), {x, k}, a);
}

std::string GraphBuilder::matmul(std::string id, const std::string& x, Tensor weights) {
  const auto w = constant(id + "/w", std::move(weights));
  return op(OpKind::kMatMul, std::move(id), {x, w});
}

std::string GraphBuilder::add_const(std::string id, const std::string& x, Tensor c) {
  const auto k = constant(id + "/c", std::move(c));
  return op(OpKind::kAddV2, std::move(id), {x, k});
}

std::string GraphBuilder::mul_const(std::string id, const std::string& x, Tensor c) {
  const auto k = constant(id + "/c", std::move(c));
  return op(OpKind::kMul, std::move(id), {x, k});
}

std::string GraphBuilder::relu6(std::string id, const std::string& x) {
  return op(OpKind::kRelu6, std::move(id), {x});
}

std::string GraphBuilder::mean(std::string id, const std::string& x, std::vector<int> axes, bool keep_dims) {
  NodeAttrs a;
  a.axes = std::move(axes);
  a.keep_dims = keep_dims;
  return op(OpKind::kMean, std::move(id), {x}, a);
}

std::string GraphBuilder::pad(std::string id, const std::string& x,
                              std::vector<std::pair<std::int64_t, std::int64_t>> pads) {
  NodeAttrs a;
  a.pads = std::move(pads);
  return op(OpKind::kPad, std::move(id), {x}, a);
}

void GraphBuilder::output(std::string id) { graph_.outputs.push_back(std::move(id)); }

ModelBundle GraphBuilder::build(BundleMetadata meta) && {
  return make_bundle(std::move(meta), std::move(graph_), std::move(weights_));
}

}  // namespace edgeinfer
