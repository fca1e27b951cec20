#include "edgeinfer/graph.hpp"

#include <algorithm>
#include <queue>
#include <unordered_set>

#include "edgeinfer/error.hpp"

namespace edgeinfer {

std::string_view to_string(OpKind op) {
  switch (op) {
    case OpKind::kInput: return "Input";
    case OpKind::kConst: return "Const";
    case OpKind::kConv2D: return "Conv2D";
    case OpKind::kDepthwiseConv2D: return "DepthwiseConv2D";
    case OpKind::kMatMul: return "MatMul";
    case OpKind::kAddV2: return "AddV2";
    case OpKind::kMul: return "Mul";
    case OpKind::kRelu6: return "Relu6";
    case OpKind::kMean: return "Mean";
    case OpKind::kPad: return "Pad";
    case OpKind::kCast: return "Cast";
    case OpKind::kIdentity: return "Identity";
  }
  return "?";
}

std::optional<OpKind> parse_op_kind(std::string_view name) {
  for (OpKind op : kAllOpKinds) {
    if (to_string(op) == name) return op;
  }
  if (name == "Placeholder") return OpKind::kInput;
  if (name == "DepthwiseConv2dNative") return OpKind::kDepthwiseConv2D;
  return std::nullopt;
}

const Node* Graph::find(std::string_view id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

Node* Graph::find(std::string_view id) {
  for (auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

const InputSpec* Graph::input_spec(std::string_view id) const {
  for (const auto& s : inputs) {
    if (s.node_id == id) return &s;
  }
  return nullptr;
}

bool Graph::is_output(std::string_view id) const {
  return std::find(outputs.begin(), outputs.end(), id) != outputs.end();
}

std::vector<std::string> Graph::consumers(std::string_view id) const {
  std::vector<std::string> out;
  for (const auto& n : nodes) {
    if (std::find(n.inputs.begin(), n.inputs.end(), id) != n.inputs.end()) out.push_back(n.id);
  }
  return out;
}

std::string Graph::fresh_id(std::string_view base) const {
  std::string candidate(base);
  for (int i = 1; find(candidate) != nullptr; ++i) candidate = std::string(base) + "_" + std::to_string(i);
  return candidate;
}

std::size_t expected_arity(OpKind op) {
  switch (op) {
    case OpKind::kInput:
    case OpKind::kConst: return 0;
    case OpKind::kConv2D:
    case OpKind::kDepthwiseConv2D:
    case OpKind::kMatMul:
    case OpKind::kAddV2:
    case OpKind::kMul: return 2;
    case OpKind::kRelu6:
    case OpKind::kMean:
    case OpKind::kPad:
    case OpKind::kCast:
    case OpKind::kIdentity: return 1;
  }
  return 0;
}

Graph validate_graph(Graph g, std::size_t weight_count) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    if (n.id.empty()) throw Error(ErrorCode::kInvalidArgument, "node with empty id");
    if (!index.emplace(n.id, i).second) throw Error(ErrorCode::kInvalidArgument, "duplicate node id '" + n.id + "'", n.id);
  }

  for (const auto& n : g.nodes) {
    if (n.inputs.size() != expected_arity(n.op)) {
      throw Error(ErrorCode::kArityViolation,
                  "node '" + n.id + "' (" + std::string(to_string(n.op)) + ") takes " +
                      std::to_string(expected_arity(n.op)) + " inputs, got " + std::to_string(n.inputs.size()),
                  n.id);
    }
    for (const auto& in : n.inputs) {
      if (!index.contains(in)) throw Error(ErrorCode::kDanglingReference, "node '" + n.id + "' references missing id '" + in + "'", in);
    }
    if (n.op == OpKind::kConst) {
      if (!n.weight_ref) throw Error(ErrorCode::kDanglingReference, "Const node '" + n.id + "' has no weight reference", n.id);
      if (*n.weight_ref >= weight_count) {
        throw Error(ErrorCode::kDanglingReference, "Const node '" + n.id + "' references weight " +
                                                       std::to_string(*n.weight_ref) + " outside the weight table", n.id);
      }
    } else if (n.weight_ref) {
      throw Error(ErrorCode::kInvalidArgument, "only Const nodes may carry a weight reference", n.id);
    }
    if (n.op == OpKind::kCast && !n.attrs.cast_to) {
      throw Error(ErrorCode::kInvalidArgument, "Cast node '" + n.id + "' has no target dtype", n.id);
    }
    if (n.op == OpKind::kCast && n.attrs.cast_to == DType::kINT8 && !n.attrs.out_scale) {
      throw Error(ErrorCode::kInvalidArgument, "Cast to int8 '" + n.id + "' needs an output scale", n.id);
    }
    if (n.op == OpKind::kInput && g.input_spec(n.id) == nullptr) {
      throw Error(ErrorCode::kDanglingReference, "Input node '" + n.id + "' has no input spec", n.id);
    }
    if ((n.op == OpKind::kConv2D || n.op == OpKind::kDepthwiseConv2D) &&
        (n.attrs.strides[0] < 1 || n.attrs.strides[1] < 1)) {
      throw Error(ErrorCode::kInvalidArgument, "strides must be >= 1", n.id);
    }
  }
  for (const auto& s : g.inputs) {
    const auto it = index.find(s.node_id);
    if (it == index.end() || g.nodes[it->second].op != OpKind::kInput) {
      throw Error(ErrorCode::kDanglingReference, "input spec names unknown Input node '" + s.node_id + "'", s.node_id);
    }
  }
  for (const auto& o : g.outputs) {
    if (!index.contains(o)) throw Error(ErrorCode::kDanglingReference, "output references missing id '" + o + "'", o);
  }

  // Kahn's algorithm, preferring the original order among ready nodes.
  const std::size_t n = g.nodes.size();
  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> users(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& in : g.nodes[i].inputs) {
      const std::size_t src = index.at(in);
      users[src].push_back(i);
      ++indegree[i];
    }
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::vector<Node> sorted;
  sorted.reserve(n);
  while (!ready.empty()) {
    const std::size_t i = ready.top();
    ready.pop();
    sorted.push_back(g.nodes[i]);
    for (std::size_t u : users[i]) {
      if (--indegree[u] == 0) ready.push(u);
    }
  }
  if (sorted.size() != n) {
    for (std::size_t i = 0; i < n; ++i) {
      if (indegree[i] != 0) throw Error(ErrorCode::kCycle, "graph contains a cycle through '" + g.nodes[i].id + "'", g.nodes[i].id);
    }
  }
  g.nodes = std::move(sorted);
  return g;
}

Graph prune_unreachable(Graph g) {
  std::unordered_map<std::string, const Node*> by_id;
  for (const auto& n : g.nodes) by_id.emplace(n.id, &n);
  std::unordered_set<std::string> live;
  std::vector<std::string> stack(g.outputs.begin(), g.outputs.end());
  while (!stack.empty()) {
    std::string id = std::move(stack.back());
    stack.pop_back();
    if (!live.insert(id).second) continue;
    const auto it = by_id.find(id);
    if (it == by_id.end()) continue;
    for (const auto& in : it->second->inputs) stack.push_back(in);
  }
  std::erase_if(g.nodes, [&](const Node& n) { return n.op != OpKind::kInput && !live.contains(n.id); });
  return g;
}

namespace {

[[noreturn]] void mismatch(const Node& node, const Shape& a, const Shape& b, std::string_view what) {
  throw Error(ErrorCode::kShapeMismatch,
              "node '" + node.id + "': " + std::string(what) + " " + shape_to_string(a) + " vs " + shape_to_string(b),
              node.id);
}

std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, int stride, Padding padding) {
  if (padding == Padding::kSame) return (in + stride - 1) / stride;
  if (in < k) return 0;
  return (in - k) / stride + 1;
}

}  // namespace

Shape infer_node_shape(const Node& node, std::span<const Shape> in) {
  switch (node.op) {
    case OpKind::kInput:
    case OpKind::kConst:
      throw Error(ErrorCode::kInvalidArgument, "source nodes have no derived shape", node.id);
    case OpKind::kRelu6:
    case OpKind::kCast:
    case OpKind::kIdentity: return in[0];
    case OpKind::kConv2D:
    case OpKind::kDepthwiseConv2D: {
      const Shape& x = in[0];
      const Shape& k = in[1];
      if (x.size() != 4 || k.size() != 4) mismatch(node, x, k, "convolution needs rank-4 data and kernel, got");
      if (x[3] != k[2]) mismatch(node, x, k, "input channels disagree between data and kernel");
      const auto oh = conv_out_extent(x[1], k[0], node.attrs.strides[0], node.attrs.padding);
      const auto ow = conv_out_extent(x[2], k[1], node.attrs.strides[1], node.attrs.padding);
      if (oh <= 0 || ow <= 0) mismatch(node, x, k, "kernel larger than VALID input");
      const auto channels = node.op == OpKind::kConv2D ? k[3] : k[2] * k[3];
      return {x[0], oh, ow, channels};
    }
    case OpKind::kMatMul: {
      const Shape& a = in[0];
      const Shape& b = in[1];
      if (a.size() != 2 || b.size() != 2 || a[1] != b[0]) mismatch(node, a, b, "matmul operands");
      return {a[0], b[1]};
    }
    case OpKind::kAddV2:
    case OpKind::kMul: {
      const Shape& a = in[0];
      const Shape& b = in[1];
      if (a == b) return a;
      auto broadcasts = [](const Shape& big, const Shape& vec) {
        return vec.size() == 1 && !big.empty() && (vec[0] == big.back() || vec[0] == 1);
      };
      if (broadcasts(a, b)) return a;
      if (broadcasts(b, a)) return b;
      mismatch(node, a, b, "operands do not broadcast along the trailing axis");
    }
    case OpKind::kMean: {
      const Shape& x = in[0];
      std::vector<bool> reduced(x.size(), false);
      for (int axis : node.attrs.axes) {
        const int a = axis < 0 ? axis + static_cast<int>(x.size()) : axis;
        if (a < 0 || a >= static_cast<int>(x.size())) {
          throw Error(ErrorCode::kShapeMismatch, "node '" + node.id + "': mean axis out of range for " + shape_to_string(x), node.id);
        }
        reduced[static_cast<std::size_t>(a)] = true;
      }
      Shape out;
      for (std::size_t d = 0; d < x.size(); ++d) {
        if (!reduced[d]) {
          out.push_back(x[d]);
        } else if (node.attrs.keep_dims) {
          out.push_back(1);
        }
      }
      if (out.empty()) out.push_back(1);
      return out;
    }
    case OpKind::kPad: {
      const Shape& x = in[0];
      if (node.attrs.pads.size() != x.size()) {
        throw Error(ErrorCode::kShapeMismatch, "node '" + node.id + "': pad amounts do not match rank of " + shape_to_string(x), node.id);
      }
      Shape out = x;
      for (std::size_t d = 0; d < x.size(); ++d) {
        const auto [before, after] = node.attrs.pads[d];
        if (before < 0 || after < 0) throw Error(ErrorCode::kInvalidArgument, "negative pad amount", node.id);
        out[d] += before + after;
      }
      return out;
    }
  }
  throw Error(ErrorCode::kUnknownOp, "unhandled op", node.id);
}

ShapeMap infer_shapes(const Graph& g, std::span<const Tensor> weights,
                      const std::unordered_map<std::string, Shape>& input_shapes) {
  ShapeMap shapes;
  for (const auto& node : g.nodes) {
    if (node.op == OpKind::kInput) {
      const auto it = input_shapes.find(node.id);
      if (it != input_shapes.end()) {
        shapes[node.id] = it->second;
      } else {
        const InputSpec* spec = g.input_spec(node.id);
        if (spec == nullptr) throw Error(ErrorCode::kDanglingReference, "Input node without spec", node.id);
        shapes[node.id] = spec->shape;
      }
      continue;
    }
    if (node.op == OpKind::kConst) {
      if (!node.weight_ref || *node.weight_ref >= weights.size()) {
        throw Error(ErrorCode::kDanglingReference, "Const node references missing weight", node.id);
      }
      shapes[node.id] = weights[*node.weight_ref].shape();
      continue;
    }
    std::vector<Shape> in;
    in.reserve(node.inputs.size());
    for (const auto& id : node.inputs) {
      const auto it = shapes.find(id);
      if (it == shapes.end()) throw Error(ErrorCode::kDanglingReference, "node '" + node.id + "' input '" + id + "' not yet defined", id);
      in.push_back(it->second);
    }
    shapes[node.id] = infer_node_shape(node, in);
  }
  return shapes;
}

std::unordered_map<std::string, DType> infer_dtypes(const Graph& g, std::span<const Tensor> weights) {
  std::unordered_map<std::string, DType> dtypes;
  for (const auto& node : g.nodes) {
    switch (node.op) {
      case OpKind::kInput: {
        const InputSpec* spec = g.input_spec(node.id);
        dtypes[node.id] = spec ? spec->dtype : DType::kFP32;
        break;
      }
      case OpKind::kConst:
        dtypes[node.id] = weights[node.weight_ref.value()].dtype();
        break;
      case OpKind::kCast:
        dtypes[node.id] = node.attrs.cast_to.value();
        break;
      default:
        dtypes[node.id] = dtypes.at(node.inputs.at(0));
        break;
    }
  }
  return dtypes;
}

OpCensus op_census(const Graph& g) {
  OpCensus census;
  for (const auto& n : g.nodes) ++census[n.op];
  return census;
}

std::size_t census_total(const OpCensus& census) {
  std::size_t total = 0;
  for (const auto& [op, count] : census) total += count;
  return total;
}

std::size_t census_count(const OpCensus& census, OpKind op) {
  const auto it = census.find(op);
  return it == census.end() ? 0 : it->second;
}

}  // namespace edgeinfer
