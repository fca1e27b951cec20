#pragma once

#include <string>
#include <vector>

#include "edgeinfer/bundle.hpp"

namespace edgeinfer {

/// Incremental graph construction. Each call returns the new node's id.
class GraphBuilder {
 public:
  std::string input(std::string id, Shape shape, DType dtype = DType::kFP32);
  std::string constant(std::string id, Tensor value);
  std::string op(OpKind kind, std::string id, std::vector<std::string> inputs, NodeAttrs attrs = {});
  std::string conv2d(std::string id, const std::string& x, Tensor kernel, std::array<int, 2> strides = {1, 1},
                     Padding padding = Padding::kSame);
  std::string depthwise(std::string id, const std::string& x, Tensor kernel, std::array<int, 2> strides = {1, 1},
                        Padding padding = Padding::kSame);
  std::string matmul(std::string id, const std::string& x, Tensor weights);
  /// x + c or x * c with a constant operand named `<id>/c`.
  std::string add_const(std::string id, const std::string& x, Tensor c);
  std::string mul_const(std::string id, const std::string& x, Tensor c);
  std::string relu6(std::string id, const std::string& x);
  std::string mean(std::string id, const std::string& x, std::vector<int> axes, bool keep_dims = false);
  std::string pad(std::string id, const std::string& x, std::vector<std::pair<std::int64_t, std::int64_t>> pads);
  void output(std::string id);

  Graph& graph() { return graph_; }
  std::vector<Tensor>& weights() { return weights_; }

  ModelBundle build(BundleMetadata meta) &&;

 private:
  Graph graph_;
  std::vector<Tensor> weights_;
};

}  // namespace edgeinfer
