#include "edgeinfer/quantizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "edgeinfer/engine.hpp"
#include "edgeinfer/error.hpp"
#include "edgeinfer/kernels.hpp"

namespace edgeinfer {

namespace {

constexpr float kScaleFloor = 1e-8f;
constexpr std::size_t kHistogramBins = 2048;

std::string format_float(float v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

bool is_compute(OpKind op) { return op != OpKind::kInput && op != OpKind::kConst && op != OpKind::kCast; }

unsigned worker_count(unsigned requested, std::size_t jobs) {
  unsigned n = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

// Runs `fn(begin, end, worker)` over contiguous slices of [0, n).
template <typename Fn>
void parallel_slices(std::size_t n, unsigned workers, Fn&& fn) {
  if (workers <= 1) {
    fn(std::size_t{0}, n, 0u);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, begin, end, w] {
      try {
        fn(begin, end, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void check_float_graph(const ModelBundle& b, std::string_view what) {
  for (const auto& n : b.graph.nodes) {
    if (n.op == OpKind::kCast) {
      throw Error(ErrorCode::kInvalidArgument, std::string(what) + " needs an FP32 bundle; '" + b.meta.name +
                                                   "' already contains Cast nodes", n.id);
    }
  }
  for (const auto& w : b.weights) {
    if (w.dtype() != DType::kFP32) {
      throw Error(ErrorCode::kInvalidArgument, std::string(what) + " needs an FP32 bundle; '" + b.meta.name +
                                                   "' has " + std::string(to_string(w.dtype())) + " weights");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Calibration

void CalibrationProfile::merge(const CalibrationProfile& other) {
  for (const auto& [id, r] : other.ranges) {
    auto [it, inserted] = ranges.emplace(id, r);
    if (inserted) continue;
    it->second.min = std::min(it->second.min, r.min);
    it->second.max = std::max(it->second.max, r.max);
    it->second.sample_count += r.sample_count;
  }
}

float CalibrationProfile::scale(const std::string& node_id) const {
  const auto it = ranges.find(node_id);
  if (it == ranges.end()) {
    throw Error(ErrorCode::kMissingCalibration, "no calibration range for node '" + node_id + "'", node_id);
  }
  const float maxabs = std::max(std::fabs(it->second.min), std::fabs(it->second.max));
  return std::max(maxabs, kScaleFloor) / static_cast<float>(kInt8Max);
}

CalibrationProfile calibrate(const ModelBundle& b, std::span<const Tensor> inputs, const CalibrationOptions& options) {
  if (inputs.empty()) throw Error(ErrorCode::kEmptyDataset, "calibration needs at least one input");
  check_float_graph(b, "calibration");
  const unsigned workers = worker_count(options.threads, inputs.size());

  std::vector<CalibrationProfile> partial(workers);
  parallel_slices(inputs.size(), workers, [&](std::size_t begin, std::size_t end, unsigned w) {
    auto& p = partial[w];
    for (std::size_t i = begin; i < end; ++i) {
      const auto values = run_forward(b, inputs[i]);
      const auto batch = static_cast<std::size_t>(inputs[i].dim(0));
      for (const auto& [id, t] : values) {
        const auto v = t.f32();
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        TensorRange r{*lo, *hi, batch};
        CalibrationProfile one;
        one.ranges.emplace(id, r);
        p.merge(one);
      }
    }
  });
  CalibrationProfile profile;
  for (const auto& p : partial) profile.merge(p);

  if (options.method == CalibrationMethod::kPercentile) {
    if (!(options.percentile > 0.0 && options.percentile <= 100.0)) {
      throw Error(ErrorCode::kInvalidArgument, "percentile must lie in (0, 100]");
    }
    // Second pass: magnitude histograms over [0, max|x|] per node.
    std::vector<std::map<std::string, std::vector<std::uint64_t>>> hist(workers);
    parallel_slices(inputs.size(), workers, [&](std::size_t begin, std::size_t end, unsigned w) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto values = run_forward(b, inputs[i]);
        for (const auto& [id, t] : values) {
          const auto& r = profile.ranges.at(id);
          const double top = std::max(std::fabs(r.min), std::fabs(r.max));
          auto& h = hist[w][id];
          h.resize(kHistogramBins);
          if (top <= 0.0) {
            h[0] += t.numel();
            continue;
          }
          for (float x : t.f32()) {
            const auto bin = std::min<std::size_t>(kHistogramBins - 1,
                                                   static_cast<std::size_t>(std::fabs(x) / top * kHistogramBins));
            ++h[bin];
          }
        }
      }
    });
    for (auto& [id, r] : profile.ranges) {
      std::vector<std::uint64_t> h(kHistogramBins);
      for (const auto& wh : hist) {
        const auto it = wh.find(id);
        if (it == wh.end()) continue;
        for (std::size_t k = 0; k < kHistogramBins; ++k) h[k] += it->second[k];
      }
      std::uint64_t total = 0;
      for (auto c : h) total += c;
      const double want = options.percentile / 100.0 * static_cast<double>(total);
      const double top = std::max(std::fabs(r.min), std::fabs(r.max));
      std::uint64_t seen = 0;
      std::size_t k = 0;
      for (; k < kHistogramBins; ++k) {
        seen += h[k];
        if (static_cast<double>(seen) >= want) break;
      }
      const float clip = static_cast<float>(top * static_cast<double>(std::min(k + 1, kHistogramBins)) / kHistogramBins);
      r.min = std::max(r.min, -clip);
      r.max = std::min(r.max, clip);
    }
  }
  return profile;
}

std::string profile_table(const CalibrationProfile& p) {
  std::string out = "#edgeinfer-calibration v1\nnode\tmin\tmax\tsamples\n";
  for (const auto& [id, r] : p.ranges) {
    out += id + "\t" + format_float(r.min) + "\t" + format_float(r.max) + "\t" + std::to_string(r.sample_count) + "\n";
  }
  return out;
}

CalibrationProfile parse_profile_table(const std::string& text) {
  CalibrationProfile p;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.rfind("node\t", 0) == 0) continue;
    std::istringstream fields(line);
    std::string id, lo, hi, count;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, lo, '\t') || !std::getline(fields, hi, '\t') ||
        !std::getline(fields, count, '\t')) {
      throw Error(ErrorCode::kParseError, "calibration table line " + std::to_string(line_no) + ": expected 4 fields");
    }
    TensorRange r;
    const auto ok = [](const std::string& s, auto& v) {
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      return res.ec == std::errc{} && res.ptr == s.data() + s.size();
    };
    if (!ok(lo, r.min) || !ok(hi, r.max) || !ok(count, r.sample_count) || r.min > r.max) {
      throw Error(ErrorCode::kParseError, "calibration table line " + std::to_string(line_no) + ": bad values");
    }
    p.ranges[id] = r;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Precision plans

DType PrecisionPlan::precision_of(const Graph& g, const std::string& node_id) const {
  const Node* n = g.find(node_id);
  if (n == nullptr || !is_compute(n->op) || excluded.contains(node_id)) return DType::kFP32;
  return target;
}

PrecisionPlan make_plan(const ModelBundle& b, DType target, const CalibrationProfile* profile,
                        const std::set<std::string>& user_excluded) {
  if (target == DType::kFP32) throw Error(ErrorCode::kInvalidArgument, "a precision plan targets FP16 or INT8");
  PrecisionPlan plan{target, {}};
  for (const auto& id : user_excluded) {
    if (b.graph.find(id) == nullptr) {
      throw Error(ErrorCode::kDanglingReference, "excluded node '" + id + "' is not in the graph", id);
    }
    plan.excluded.insert(id);
  }
  if (profile != nullptr) {
    std::vector<std::pair<std::string, double>> ranges;
    for (const auto& n : b.graph.nodes) {
      if (!is_compute(n.op)) continue;
      const auto it = profile->ranges.find(n.id);
      if (it == profile->ranges.end()) continue;
      const double span = static_cast<double>(it->second.max) - it->second.min;
      if (span > 0.0) ranges.emplace_back(n.id, span);
    }
    if (!ranges.empty()) {
      std::vector<double> spans;
      for (const auto& r : ranges) spans.push_back(r.second);
      std::sort(spans.begin(), spans.end());
      const std::size_t m = spans.size() / 2;
      const double median = spans.size() % 2 == 1 ? spans[m] : 0.5 * (spans[m - 1] + spans[m]);
      for (const auto& [id, span] : ranges) {
        if (span > 127.0 * median) plan.excluded.insert(id);
      }
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Constant fusion

namespace {

struct Work {
  Graph g;
  std::vector<Tensor> weights;

  const Tensor* const_value(const std::string& id) const {
    const Node* n = g.find(id);
    return n != nullptr && n->op == OpKind::kConst ? &weights.at(*n->weight_ref) : nullptr;
  }

  void replace_uses(const std::string& from, const std::string& to) {
    for (auto& n : g.nodes) {
      for (auto& in : n.inputs) {
        if (in == from) in = to;
      }
    }
    for (auto& o : g.outputs) {
      if (o == from) o = to;
    }
  }

  void erase(const std::string& id) {
    std::erase_if(g.nodes, [&](const Node& n) { return n.id == id; });
  }

  bool sole_consumer(const std::string& producer, const std::string& consumer) const {
    if (g.is_output(producer)) return false;
    const auto users = g.consumers(producer);
    return users.size() == 1 && users.front() == consumer;
  }

  std::string add_const(const std::string& base, Tensor t) {
    Node c{g.fresh_id(base), OpKind::kConst, {}, {}, add_weight(weights, std::move(t))};
    g.nodes.push_back(c);
    return c.id;
  }
};

bool remove_identity(Work& w) {
  for (const auto& n : w.g.nodes) {
    if (n.op != OpKind::kIdentity) continue;
    const std::string id = n.id;
    const std::string src = n.inputs.at(0);
    w.erase(id);
    w.replace_uses(id, src);
    return true;
  }
  return false;
}

bool fold_all_const(Work& w) {
  for (auto& n : w.g.nodes) {
    if (!is_compute(n.op) || n.inputs.empty()) continue;
    std::vector<const Tensor*> args;
    for (const auto& in : n.inputs) args.push_back(w.const_value(in));
    if (std::any_of(args.begin(), args.end(), [](const Tensor* t) { return t == nullptr; })) continue;
    std::vector<Shape> shapes;
    for (const auto* t : args) shapes.push_back(t->shape());
    Tensor value = evaluate_node(n, args, infer_node_shape(n, shapes));
    n.op = OpKind::kConst;
    n.inputs.clear();
    n.attrs = {};
    n.weight_ref = add_weight(w.weights, std::move(value));
    return true;
  }
  return false;
}

// Index of the const operand of a binary node (and the other one), if any.
std::optional<std::pair<std::size_t, std::size_t>> const_operand(const Work& w, const Node& n) {
  if (n.inputs.size() != 2) return std::nullopt;
  if (w.const_value(n.inputs[1]) != nullptr && w.const_value(n.inputs[0]) == nullptr) return std::pair{1u, 0u};
  if (w.const_value(n.inputs[0]) != nullptr && w.const_value(n.inputs[1]) == nullptr) return std::pair{0u, 1u};
  return std::nullopt;
}

bool channel_vector(const Tensor& c, std::int64_t channels) {
  return c.dtype() == DType::kFP32 && c.rank() == 1 && (c.dim(0) == 1 || c.dim(0) == channels);
}

bool fold_mul_into_linear(Work& w) {
  for (const auto& n : w.g.nodes) {
    if (n.op != OpKind::kMul) continue;
    const auto operands = const_operand(w, n);
    if (!operands) continue;
    const Tensor& c = *w.const_value(n.inputs[operands->first]);
    const std::string producer_id = n.inputs[operands->second];
    const Node* p = w.g.find(producer_id);
    if (p->op != OpKind::kConv2D && p->op != OpKind::kDepthwiseConv2D && p->op != OpKind::kMatMul) continue;
    if (!w.sole_consumer(producer_id, n.id)) continue;
    const Tensor* k = w.const_value(p->inputs.at(1));
    if (k == nullptr || k->dtype() != DType::kFP32) continue;
    // Output channels are the trailing (flattened, for depthwise) kernel axes.
    const std::int64_t channels = p->op == OpKind::kDepthwiseConv2D ? k->dim(2) * k->dim(3) : k->shape().back();
    if (!channel_vector(c, channels)) continue;

    std::vector<float> scaled(k->f32().begin(), k->f32().end());
    const auto cv = c.f32();
    for (std::size_t i = 0; i < scaled.size(); ++i) {
      scaled[i] *= cv[cv.size() == 1 ? 0 : i % static_cast<std::size_t>(channels)];
    }
    const std::string mul_id = n.id;
    const std::string kernel = w.add_const(p->inputs[1], Tensor::from_f32(k->shape(), std::move(scaled)));
    w.g.find(producer_id)->inputs[1] = kernel;
    w.erase(mul_id);
    w.replace_uses(mul_id, producer_id);
    return true;
  }
  return false;
}

bool merge_const_chain(Work& w) {
  for (const auto& n : w.g.nodes) {
    if (n.op != OpKind::kMul && n.op != OpKind::kAddV2) continue;
    const auto outer = const_operand(w, n);
    if (!outer) continue;
    const std::string inner_id = n.inputs[outer->second];
    const Node* inner = w.g.find(inner_id);
    if (inner->op != n.op || !w.sole_consumer(inner_id, n.id)) continue;
    const auto inner_ops = const_operand(w, *inner);
    if (!inner_ops) continue;
    const Tensor& c1 = *w.const_value(inner->inputs[inner_ops->first]);
    const Tensor& c2 = *w.const_value(n.inputs[outer->first]);
    if (c1.dtype() != DType::kFP32 || c2.dtype() != DType::kFP32) continue;
    Shape os;
    if (c1.shape() == c2.shape()) {
      os = c1.shape();
    } else if (c1.rank() == 1 && c2.rank() == 1 && (c1.numel() == 1 || c2.numel() == 1)) {
      os = c1.numel() == 1 ? c2.shape() : c1.shape();
    } else {
      continue;
    }
    auto merged = n.op == OpKind::kMul ? kernels::mul(c1.f32(), c1.shape(), c2.f32(), c2.shape(), os)
                                       : kernels::add(c1.f32(), c1.shape(), c2.f32(), c2.shape(), os);
    const std::string outer_id = n.id;
    const std::string data = inner->inputs[inner_ops->second];
    const std::string c = w.add_const(outer_id + "/c", Tensor::from_f32(os, std::move(merged)));
    w.erase(inner_id);
    Node* outer_node = w.g.find(outer_id);
    outer_node->inputs = {data, c};
    return true;
  }
  return false;
}

}  // namespace

ModelBundle fuse_constants(const ModelBundle& b) {
  Work w{b.graph, b.weights};
  while (remove_identity(w) || fold_all_const(w) || fold_mul_into_linear(w) || merge_const_chain(w)) {
  }
  BundleMetadata meta = b.meta;
  if (meta.variant == "fp32") meta.variant = "fp32opt";
  return make_bundle(std::move(meta), std::move(w.g), std::move(w.weights));
}

// ---------------------------------------------------------------------------
// Precision conversion

Tensor quantize_weights_per_channel(const Tensor& w, int axis) {
  if (w.dtype() != DType::kFP32) throw Error(ErrorCode::kDtypeMismatch, "weights to quantize must be FP32");
  if (axis < 0 || static_cast<std::size_t>(axis) >= w.rank()) {
    throw Error(ErrorCode::kInvalidArgument, "quantization axis out of range");
  }
  const auto& s = w.shape();
  const auto channels = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
  std::size_t inner = 1;
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) inner *= static_cast<std::size_t>(s[d]);
  std::vector<float> maxabs(channels, 0.0f);
  const auto v = w.f32();
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto& m = maxabs[(i / inner) % channels];
    m = std::max(m, std::fabs(v[i]));
  }
  std::vector<float> scales(channels);
  for (std::size_t c = 0; c < channels; ++c) scales[c] = std::max(maxabs[c], kScaleFloor) / static_cast<float>(kInt8Max);
  return quantize_linear(w, QuantParams::per_channel(axis, std::move(scales)));
}

Tensor quantize_weights_per_tensor(const Tensor& w) {
  if (w.dtype() != DType::kFP32) throw Error(ErrorCode::kDtypeMismatch, "weights to quantize must be FP32");
  float maxabs = 0.0f;
  for (float x : w.f32()) maxabs = std::max(maxabs, std::fabs(x));
  return quantize_linear(w, QuantParams::per_tensor(std::max(maxabs, kScaleFloor) / static_cast<float>(kInt8Max)));
}

namespace {

std::string lower_dtype(DType d) {
  std::string s(to_string(d));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

class PrecisionRewriter {
 public:
  PrecisionRewriter(const ModelBundle& b, const PrecisionPlan& plan, const CalibrationProfile* profile)
      : src_(b), plan_(plan), profile_(profile), weights_(b.weights) {
    out_.inputs = b.graph.inputs;
    out_.output_dtype = DType::kFP32;
  }

  ModelBundle run(const std::string& variant) {
    for (const auto& n : src_.graph.nodes) {
      if (n.op == OpKind::kInput) {
        out_.nodes.push_back(n);
        dtype_[n.id] = src_.graph.input_spec(n.id)->dtype;
        continue;
      }
      if (n.op == OpKind::kConst) {
        out_.nodes.push_back(n);
        continue;
      }
      const DType p = plan_.precision_of(src_.graph, n.id);
      Node m = n;
      for (std::size_t i = 0; i < m.inputs.size(); ++i) {
        const Node* in = src_.graph.find(m.inputs[i]);
        if (in->op == OpKind::kConst) {
          if (p != DType::kFP32) m.inputs[i] = convert_const(*in, n, i, p);
        } else if (dtype_.at(in->id) != p) {
          m.inputs[i] = cast_of(in->id, p);
        }
      }
      if (p == DType::kINT8) m.attrs.out_scale = scale(n.id);
      out_.nodes.push_back(std::move(m));
      dtype_[n.id] = p;
    }
    for (const auto& o : src_.graph.outputs) {
      const auto it = dtype_.find(o);
      out_.outputs.push_back(it != dtype_.end() && it->second != DType::kFP32 ? cast_of(o, DType::kFP32) : o);
    }
    BundleMetadata meta = src_.meta;
    meta.variant = variant;
    return make_bundle(std::move(meta), std::move(out_), std::move(weights_));
  }

 private:
  float scale(const std::string& id) const {
    if (profile_ == nullptr) throw Error(ErrorCode::kMissingCalibration, "INT8 conversion needs a calibration profile", id);
    return profile_->scale(id);
  }

  std::string unique_id(const std::string& base) {
    std::string id = base;
    for (int k = 1; src_.graph.find(id) != nullptr || out_.find(id) != nullptr; ++k) id = base + "_" + std::to_string(k);
    return id;
  }

  std::string cast_of(const std::string& src, DType target) {
    const auto key = src + '\n' + lower_dtype(target);
    if (const auto it = casts_.find(key); it != casts_.end()) return it->second;
    Node c;
    c.id = unique_id(src + "/to_" + lower_dtype(target));
    c.op = OpKind::kCast;
    c.inputs = {src};
    c.attrs.cast_to = target;
    if (target == DType::kINT8) c.attrs.out_scale = scale(src);
    out_.nodes.push_back(c);
    dtype_[c.id] = target;
    casts_.emplace(key, c.id);
    return c.id;
  }

  std::string convert_const(const Node& c, const Node& consumer, std::size_t slot, DType p) {
    const Tensor& w = weights_.at(*c.weight_ref);
    std::string format;
    Tensor converted;
    if (p == DType::kFP16) {
      format = "fp16";
      converted = cast(w, DType::kFP16);
    } else {
      int axis = -1;
      if (slot == 1 && consumer.op == OpKind::kConv2D) axis = 3;
      if (slot == 1 && consumer.op == OpKind::kDepthwiseConv2D) axis = 2;
      if (slot == 1 && consumer.op == OpKind::kMatMul) axis = 1;
      if (consumer.op == OpKind::kAddV2) return c.id;  // bias, applied in 32-bit integers
      format = axis >= 0 ? "int8_axis" + std::to_string(axis) : "int8";
      converted = axis >= 0 ? quantize_weights_per_channel(w, axis) : quantize_weights_per_tensor(w);
    }
    const auto key = c.id + '\n' + format;
    if (const auto it = consts_.find(key); it != consts_.end()) return it->second;
    Node n{unique_id(c.id + "/" + format), OpKind::kConst, {}, {}, add_weight(weights_, std::move(converted))};
    out_.nodes.push_back(n);
    consts_.emplace(key, n.id);
    return n.id;
  }

  const ModelBundle& src_;
  const PrecisionPlan& plan_;
  const CalibrationProfile* profile_;
  std::vector<Tensor> weights_;
  Graph out_;
  std::unordered_map<std::string, DType> dtype_;
  std::unordered_map<std::string, std::string> casts_;
  std::unordered_map<std::string, std::string> consts_;
};

}  // namespace

ModelBundle convert_fp16(const ModelBundle& b, const PrecisionPlan& plan) {
  check_float_graph(b, "FP16 conversion");
  PrecisionPlan p = plan;
  p.target = DType::kFP16;
  return PrecisionRewriter(b, p, nullptr).run("fp16");
}

ModelBundle quantize_int8(const ModelBundle& b, const CalibrationProfile& profile, const PrecisionPlan& plan) {
  check_float_graph(b, "INT8 quantization");
  PrecisionPlan p = plan;
  p.target = DType::kINT8;
  return PrecisionRewriter(b, p, &profile).run("int8");
}

VariantSet make_variants(const ModelBundle& original, std::span<const Tensor> calibration_inputs,
                         const CalibrationOptions& options, const std::set<std::string>& user_excluded) {
  VariantSet v{fuse_constants(original), {}, {}, {}, {}};
  v.fp32opt.meta.variant = "fp32opt";
  v.profile = calibrate(v.fp32opt, calibration_inputs, options);
  v.int8_plan = make_plan(v.fp32opt, DType::kINT8, &v.profile, user_excluded);
  v.fp16 = convert_fp16(v.fp32opt, make_plan(v.fp32opt, DType::kFP16, nullptr, user_excluded));
  v.int8 = quantize_int8(v.fp32opt, v.profile, v.int8_plan);
  return v;
}

std::string variant_suffix(const std::string& variant) {
  if (variant == "fp32" || variant.empty()) return "";
  return "-" + variant;
}

}  // namespace edgeinfer
