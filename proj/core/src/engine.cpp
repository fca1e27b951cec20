#include "edgeinfer/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_set>

#include "edgeinfer/error.hpp"
#include "edgeinfer/fp16.hpp"
#include "edgeinfer/kernels.hpp"

namespace edgeinfer {

namespace {

[[noreturn]] void dtype_error(const Node& node, std::string_view detail) {
  throw Error(ErrorCode::kDtypeMismatch, "node '" + node.id + "' (" + std::string(to_string(node.op)) + "): " +
                                             std::string(detail), node.id);
}

std::vector<float> widen(const Tensor& t) { return t.to_f32_values(); }

std::vector<std::uint16_t> narrow(std::span<const float> v) {
  std::vector<std::uint16_t> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), float_to_half);
  return out;
}

// Per-channel weight scales expanded to `count` entries.
std::vector<float> channel_scales(const Node& node, const Tensor& w, int axis, std::int64_t count) {
  const auto& q = *w.quant();
  if (!q.is_per_channel()) return std::vector<float>(static_cast<std::size_t>(count), q.scale);
  if (*q.axis != axis || static_cast<std::int64_t>(q.scales.size()) != count) {
    throw Error(ErrorCode::kInvalidQuantParams, "node '" + node.id + "': weight scales must be per-channel along axis " +
                                                    std::to_string(axis), node.id);
  }
  return q.scales;
}

float out_scale_of(const Node& node) {
  if (!node.attrs.out_scale || !(*node.attrs.out_scale > 0.0f)) {
    throw Error(ErrorCode::kInvalidQuantParams, "INT8 node '" + node.id + "' has no positive output scale", node.id);
  }
  return *node.attrs.out_scale;
}

float scale_of(const Tensor& t) { return t.quant()->scale; }

// FP32 semantics of every op. FP16 nodes run through this on widened values.
std::vector<float> eval_real(const Node& node, const std::vector<std::vector<float>>& in,
                             const std::vector<const Tensor*>& tensors, const Shape& os) {
  const kernels::ConvParams cp{node.attrs.strides, node.attrs.padding};
  switch (node.op) {
    case OpKind::kConv2D:
      return kernels::conv2d(in[0], tensors[0]->shape(), in[1], tensors[1]->shape(), cp, os);
    case OpKind::kDepthwiseConv2D:
      return kernels::depthwise_conv2d(in[0], tensors[0]->shape(), in[1], tensors[1]->shape(), cp, os);
    case OpKind::kMatMul:
      return kernels::matmul(in[0], tensors[0]->shape(), in[1], tensors[1]->shape());
    case OpKind::kAddV2:
      return kernels::add(in[0], tensors[0]->shape(), in[1], tensors[1]->shape(), os);
    case OpKind::kMul:
      return kernels::mul(in[0], tensors[0]->shape(), in[1], tensors[1]->shape(), os);
    case OpKind::kRelu6: return kernels::relu6(in[0]);
    case OpKind::kMean: return kernels::mean(in[0], tensors[0]->shape(), node.attrs.axes);
    case OpKind::kPad: return kernels::pad(in[0], tensors[0]->shape(), node.attrs.pads, os);
    case OpKind::kIdentity: return in[0];
    default: break;
  }
  throw Error(ErrorCode::kInvalidArgument, "node '" + node.id + "' cannot be evaluated here", node.id);
}

Tensor eval_int8(const Node& node, const std::vector<const Tensor*>& in, const Shape& os) {
  const float out_scale = out_scale_of(node);
  const kernels::ConvParams cp{node.attrs.strides, node.attrs.padding};
  auto need_i8 = [&](std::size_t i) {
    if (in[i]->dtype() != DType::kINT8) dtype_error(node, "int8 kernel received a " + std::string(to_string(in[i]->dtype())) + " operand");
  };
  std::vector<std::int8_t> out;
  switch (node.op) {
    case OpKind::kConv2D: {
      need_i8(0);
      need_i8(1);
      const auto& k = *in[1];
      const auto scales = channel_scales(node, k, 3, k.dim(3));
      out = kernels::conv2d_i8(in[0]->i8(), in[0]->shape(), scale_of(*in[0]), k.i8(), k.shape(), scales, cp, os, out_scale);
      break;
    }
    case OpKind::kDepthwiseConv2D: {
      need_i8(0);
      need_i8(1);
      const auto& k = *in[1];
      const auto scales = channel_scales(node, k, 2, k.dim(2));
      out = kernels::depthwise_conv2d_i8(in[0]->i8(), in[0]->shape(), scale_of(*in[0]), k.i8(), k.shape(), scales, cp,
                                         os, out_scale);
      break;
    }
    case OpKind::kMatMul: {
      need_i8(0);
      need_i8(1);
      const auto& b = *in[1];
      const auto scales = channel_scales(node, b, 1, b.dim(1));
      out = kernels::matmul_i8(in[0]->i8(), in[0]->shape(), scale_of(*in[0]), b.i8(), b.shape(), scales, out_scale);
      break;
    }
    case OpKind::kAddV2: {
      const Tensor* a = in[0];
      const Tensor* b = in[1];
      if (a->dtype() != DType::kINT8) std::swap(a, b);
      if (a->dtype() != DType::kINT8) dtype_error(node, "int8 add needs an int8 operand");
      if (b->dtype() == DType::kINT8) {
        out = kernels::add_i8(a->i8(), scale_of(*a), b->i8(), scale_of(*b), element_count(os), out_scale);
      } else if (b->dtype() == DType::kFP32 && a->numel() == element_count(os)) {
        out = kernels::add_bias_i8(a->i8(), scale_of(*a), b->f32(), out_scale);
      } else {
        dtype_error(node, "int8 add accepts an int8 or fp32-bias second operand");
      }
      break;
    }
    case OpKind::kMul:
      need_i8(0);
      need_i8(1);
      out = kernels::mul_i8(in[0]->i8(), scale_of(*in[0]), in[1]->i8(), scale_of(*in[1]), element_count(os), out_scale);
      break;
    case OpKind::kRelu6:
      need_i8(0);
      out = kernels::relu6_i8(in[0]->i8(), scale_of(*in[0]), out_scale);
      break;
    case OpKind::kMean:
      need_i8(0);
      out = kernels::mean_i8(in[0]->i8(), in[0]->shape(), scale_of(*in[0]), node.attrs.axes, out_scale);
      break;
    case OpKind::kPad:
      need_i8(0);
      out = kernels::pad_i8(in[0]->i8(), in[0]->shape(), scale_of(*in[0]), node.attrs.pads, os, out_scale);
      break;
    case OpKind::kIdentity:
      need_i8(0);
      out = kernels::requantize(in[0]->i8(), scale_of(*in[0]), out_scale);
      break;
    default:
      throw Error(ErrorCode::kInvalidArgument, "node '" + node.id + "' cannot be evaluated here", node.id);
  }
  return Tensor::from_i8(os, std::move(out), QuantParams::per_tensor(out_scale));
}

Tensor eval_cast(const Node& node, const Tensor& x) {
  const DType target = node.attrs.cast_to.value();
  if (x.dtype() == target) {
    if (target != DType::kINT8) return x;
    return Tensor::from_i8(x.shape(), kernels::requantize(x.i8(), scale_of(x), out_scale_of(node)),
                           QuantParams::per_tensor(out_scale_of(node)));
  }
  if (target == DType::kINT8) {
    const Tensor real = x.dtype() == DType::kFP32 ? x : cast(x, DType::kFP32);
    return quantize_linear(real, QuantParams::per_tensor(out_scale_of(node)));
  }
  if (x.dtype() == DType::kINT8) {
    const Tensor real = dequantize_linear(x);
    return target == DType::kFP32 ? real : cast(real, target);
  }
  return cast(x, target);
}

}  // namespace

Tensor evaluate_node(const Node& node, const std::vector<const Tensor*>& in, const Shape& os) {
  if (node.op == OpKind::kCast) return eval_cast(node, *in[0]);

  // The compute precision follows the data operand (the first input that
  // is not a constant when one is a constant).
  DType mode = in[0]->dtype();
  if ((node.op == OpKind::kAddV2 || node.op == OpKind::kMul) && in.size() == 2 && in[0]->dtype() != in[1]->dtype() &&
      in[1]->dtype() == DType::kINT8) {
    mode = DType::kINT8;
  }
  if (mode == DType::kINT8) return eval_int8(node, in, os);

  for (const Tensor* t : in) {
    if (t->dtype() != mode) {
      dtype_error(node, "operands mix " + std::string(to_string(mode)) + " and " + std::string(to_string(t->dtype())));
    }
  }
  std::vector<std::vector<float>> real;
  real.reserve(in.size());
  for (const Tensor* t : in) real.push_back(widen(*t));
  auto result = eval_real(node, real, in, os);
  if (mode == DType::kFP16) return Tensor::from_f16(os, narrow(result));
  return Tensor::from_f32(os, std::move(result));
}

namespace {

std::unordered_set<std::string> needed_nodes(const Graph& g, const std::vector<std::string>& targets) {
  std::unordered_set<std::string> needed;
  std::vector<std::string> stack(targets.begin(), targets.end());
  while (!stack.empty()) {
    std::string id = std::move(stack.back());
    stack.pop_back();
    if (!needed.insert(id).second) continue;
    const Node* n = g.find(id);
    if (n == nullptr) throw Error(ErrorCode::kDanglingReference, "unknown target node '" + id + "'", id);
    for (const auto& in : n->inputs) stack.push_back(in);
  }
  return needed;
}

}  // namespace

ValueMap run_forward(const ModelBundle& b, const std::unordered_map<std::string, Tensor>& inputs,
                     const ForwardOptions& options) {
  const Graph& g = b.graph;
  const auto& targets = options.targets.empty() ? g.outputs : options.targets;
  const auto needed = needed_nodes(g, targets);

  ValueMap values;
  std::vector<const Tensor*> args;
  for (const auto& node : g.nodes) {
    if (!needed.contains(node.id) || node.op == OpKind::kConst) continue;
    if (node.op == OpKind::kInput) {
      const auto it = inputs.find(node.id);
      if (it == inputs.end()) throw Error(ErrorCode::kInvalidArgument, "no value supplied for input '" + node.id + "'", node.id);
      const InputSpec* spec = g.input_spec(node.id);
      const Tensor& x = it->second;
      if (x.dtype() != spec->dtype) {
        dtype_error(node, "input is " + std::string(to_string(x.dtype())) + " but the graph expects " +
                              std::string(to_string(spec->dtype)));
      }
      bool ok = x.rank() == spec->shape.size();
      for (std::size_t d = 1; ok && d < x.rank(); ++d) ok = x.dim(d) == spec->shape[d];
      if (!ok) {
        throw Error(ErrorCode::kShapeMismatch, "input '" + node.id + "' has shape " + shape_to_string(x.shape()) +
                                                   ", expected " + shape_to_string(spec->shape), node.id);
      }
      values.emplace(node.id, x);
      continue;
    }
    args.clear();
    std::vector<Shape> shapes;
    for (const auto& id : node.inputs) {
      const Node* src = g.find(id);
      const Tensor* t = src->op == OpKind::kConst ? &b.weights.at(src->weight_ref.value()) : &values.at(id);
      args.push_back(t);
      shapes.push_back(t->shape());
    }
    const Shape os = infer_node_shape(node, shapes);
    values.emplace(node.id, evaluate_node(node, args, os));
  }
  return values;
}

ValueMap run_forward(const ModelBundle& b, const Tensor& input, const ForwardOptions& options) {
  if (b.graph.inputs.size() != 1) {
    throw Error(ErrorCode::kInvalidArgument, "graph has " + std::to_string(b.graph.inputs.size()) + " inputs; pass a map");
  }
  return run_forward(b, {{b.graph.inputs.front().node_id, input}}, options);
}

std::vector<Tensor> run_outputs(const ModelBundle& b, const Tensor& input) {
  auto values = run_forward(b, input);
  std::vector<Tensor> out;
  for (const auto& id : b.graph.outputs) {
    const Node* n = b.graph.find(id);
    if (n->op == OpKind::kConst) {
      out.push_back(b.weights.at(n->weight_ref.value()));
    } else {
      out.push_back(values.at(id));
    }
  }
  return out;
}

Tensor preprocess(const Image& img, const PreprocessSpec& spec) {
  if (img.width <= 0 || img.height <= 0) throw Error(ErrorCode::kUndecodableImage, "empty image");
  const int H = spec.height, W = spec.width;
  std::vector<float> out(static_cast<std::size_t>(H) * W * 3);
  auto map_value = [&](float v) {
    return spec.value_range == ValueRange::kZeroOne ? v / 255.0f : v / 127.5f - 1.0f;
  };
  if (img.width == W && img.height == H) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = map_value(static_cast<float>(img.rgb[i]));
  } else {
    const double sy = static_cast<double>(img.height) / H;
    const double sx = static_cast<double>(img.width) / W;
    for (int y = 0; y < H; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, img.height - 1);
      const double wy = fy - y0;
      for (int x = 0; x < W; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, img.width - 1);
        const double wx = fx - x0;
        for (int c = 0; c < 3; ++c) {
          const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
          const double bottom = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
          out[(static_cast<std::size_t>(y) * W + x) * 3 + c] = map_value(static_cast<float>(top * (1 - wy) + bottom * wy));
        }
      }
    }
  }
  return Tensor::from_f32({1, H, W, 3}, std::move(out));
}

Tensor preprocess(std::span<const std::uint8_t> image_bytes, const PreprocessSpec& spec) {
  return preprocess(decode_image(image_bytes), spec);
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot stack an empty batch");
  Shape shape = items.front().shape();
  std::vector<float> data;
  data.reserve(items.front().numel() * items.size());
  for (const auto& t : items) {
    if (t.rank() != shape.size() || t.dim(0) != 1 || !std::equal(shape.begin() + 1, shape.end(), t.shape().begin() + 1)) {
      throw Error(ErrorCode::kShapeMismatch, "batch items disagree in shape");
    }
    const auto v = t.f32();
    data.insert(data.end(), v.begin(), v.end());
  }
  shape[0] = static_cast<std::int64_t>(items.size());
  return Tensor::from_f32(std::move(shape), std::move(data));
}

double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Prediction postprocess(std::span<const float> outputs, const std::vector<std::string>& classes, int positive_class) {
  Prediction p;
  p.outputs.assign(outputs.begin(), outputs.end());
  if (outputs.empty()) throw Error(ErrorCode::kInvalidArgument, "model produced no outputs");
  if (outputs.size() == 1) {
    if (classes.size() != 2) throw Error(ErrorCode::kInvalidArgument, "a single-logit head needs exactly two classes");
    const double prob = sigmoid(outputs[0]);
    const int negative = positive_class == 0 ? 1 : 0;
    if (prob >= 0.5) {
      p.class_index = positive_class;
      p.confidence = prob;
    } else {
      p.class_index = negative;
      p.confidence = 1.0 - prob;
    }
  } else {
    if (outputs.size() != classes.size()) {
      throw Error(ErrorCode::kWidthMismatch, "head width " + std::to_string(outputs.size()) + " does not match " +
                                                 std::to_string(classes.size()) + " classes");
    }
    const float top = *std::max_element(outputs.begin(), outputs.end());
    double total = 0.0;
    for (float v : outputs) total += std::exp(static_cast<double>(v) - top);
    const auto best = std::max_element(outputs.begin(), outputs.end()) - outputs.begin();
    p.class_index = static_cast<int>(best);
    p.confidence = 1.0 / total;
  }
  p.label = classes.at(static_cast<std::size_t>(p.class_index));
  return p;
}

Prediction predict(const ModelBundle& b, const Image& img) {
  const Tensor input = preprocess(img, b.meta.preprocess);
  const auto start = std::chrono::steady_clock::now();
  const auto outputs = run_outputs(b, input);
  const auto stop = std::chrono::steady_clock::now();
  if (outputs.empty()) throw Error(ErrorCode::kInvalidArgument, "graph has no outputs");
  const auto values = outputs.front().to_f32_values();
  Prediction p = postprocess(values, b.meta.classes, b.meta.positive_class);
  p.latency_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  return p;
}

Prediction predict(const ModelBundle& b, std::span<const std::uint8_t> image_bytes) {
  return predict(b, decode_image(image_bytes));
}

}  // namespace edgeinfer
