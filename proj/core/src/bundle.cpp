#include "edgeinfer/bundle.hpp"

#include <openssl/evp.h>

#include <bit>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "edgeinfer/error.hpp"

namespace edgeinfer {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw Error(ErrorCode::kIo, "sha256 digest failed");
  }
  return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::string_view to_string(ValueRange range) {
  return range == ValueRange::kZeroOne ? "zero-one" : "minus-one-one";
}

ValueRange parse_value_range(std::string_view text) {
  if (text == "zero-one") return ValueRange::kZeroOne;
  if (text == "minus-one-one") return ValueRange::kMinusOneOne;
  throw Error(ErrorCode::kInvalidArgument, "unknown value range '" + std::string(text) + "'");
}

std::size_t add_weight(std::vector<Tensor>& weights, Tensor t) {
  weights.push_back(std::move(t));
  return weights.size() - 1;
}

ModelBundle make_bundle(BundleMetadata meta, Graph graph, std::vector<Tensor> weights) {
  graph = validate_graph(std::move(graph), weights.size());
  graph = prune_unreachable(std::move(graph));

  // Compact the weight table to what the graph still references, in first-use order.
  std::vector<Tensor> used;
  std::unordered_map<std::size_t, std::size_t> remap;
  for (auto& node : graph.nodes) {
    if (!node.weight_ref) continue;
    const auto [it, inserted] = remap.emplace(*node.weight_ref, used.size());
    if (inserted) used.push_back(weights[*node.weight_ref]);
    node.weight_ref = it->second;
  }
  infer_shapes(graph, used);

  ModelBundle b{std::move(meta), std::move(graph), std::move(used), {}};
  const auto blob = serialize_weights(b.weights).blob;
  b.checksum = sha256(blob);
  return b;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

SerializedWeights serialize_weights(std::span<const Tensor> weights) {
  SerializedWeights out;
  for (const auto& t : weights) {
    WeightEntry e;
    e.offset = out.blob.size();
    switch (t.dtype()) {
      case DType::kFP32:
        for (float v : t.f32()) put_u32(out.blob, std::bit_cast<std::uint32_t>(v));
        break;
      case DType::kFP16:
        for (auto h : t.f16()) {
          out.blob.push_back(static_cast<std::uint8_t>(h & 0xffu));
          out.blob.push_back(static_cast<std::uint8_t>(h >> 8));
        }
        break;
      case DType::kINT8:
        for (auto q : t.i8()) out.blob.push_back(std::bit_cast<std::uint8_t>(q));
        break;
    }
    e.length = out.blob.size() - e.offset;
    if (t.dtype() == DType::kINT8) {
      const auto& q = *t.quant();
      e.scales_offset = out.blob.size();
      if (q.is_per_channel()) {
        for (float s : q.scales) put_u32(out.blob, std::bit_cast<std::uint32_t>(s));
        e.scales_count = q.scales.size();
      } else {
        put_u32(out.blob, std::bit_cast<std::uint32_t>(q.scale));
        e.scales_count = 1;
      }
    }
    out.entries.push_back(e);
  }
  return out;
}

namespace {

json shape_json(const Shape& s) {
  json arr = json::array();
  for (auto d : s) arr.push_back(d);
  return arr;
}

Shape shape_from(const json& j) {
  Shape s;
  for (const auto& d : j) s.push_back(d.get<std::int64_t>());
  return s;
}

json node_json(const Node& n) {
  json j;
  j["id"] = n.id;
  j["op"] = std::string(to_string(n.op));
  j["inputs"] = n.inputs;
  json attrs = json::object();
  switch (n.op) {
    case OpKind::kConv2D:
    case OpKind::kDepthwiseConv2D:
      attrs["strides"] = {n.attrs.strides[0], n.attrs.strides[1]};
      attrs["padding"] = n.attrs.padding == Padding::kSame ? "SAME" : "VALID";
      break;
    case OpKind::kCast:
      attrs["to"] = std::string(to_string(n.attrs.cast_to.value()));
      break;
    case OpKind::kMean:
      attrs["axes"] = n.attrs.axes;
      attrs["keep_dims"] = n.attrs.keep_dims;
      break;
    case OpKind::kPad: {
      json pads = json::array();
      for (auto [b, a] : n.attrs.pads) pads.push_back({b, a});
      attrs["pads"] = pads;
      break;
    }
    default: break;
  }
  if (n.attrs.out_scale) attrs["out_scale"] = *n.attrs.out_scale;
  if (!attrs.empty()) j["attrs"] = attrs;
  if (n.weight_ref) j["weight"] = *n.weight_ref;
  return j;
}

Node node_from(const json& j) {
  Node n;
  n.id = j.at("id").get<std::string>();
  const auto op_name = j.at("op").get<std::string>();
  const auto op = parse_op_kind(op_name);
  if (!op) throw Error(ErrorCode::kUnknownOp, "node '" + n.id + "' has unknown op '" + op_name + "'", n.id);
  n.op = *op;
  if (j.contains("inputs")) n.inputs = j.at("inputs").get<std::vector<std::string>>();
  if (j.contains("weight")) n.weight_ref = j.at("weight").get<std::size_t>();
  if (j.contains("attrs")) {
    const auto& a = j.at("attrs");
    if (a.contains("strides")) {
      const auto s = a.at("strides").get<std::vector<int>>();
      if (s.size() != 2) throw Error(ErrorCode::kMalformedBundle, "strides must have two entries", n.id);
      n.attrs.strides = {s[0], s[1]};
    }
    if (a.contains("padding")) {
      const auto p = a.at("padding").get<std::string>();
      if (p == "SAME") {
        n.attrs.padding = Padding::kSame;
      } else if (p == "VALID") {
        n.attrs.padding = Padding::kValid;
      } else {
        throw Error(ErrorCode::kMalformedBundle, "unknown padding mode '" + p + "'", n.id);
      }
    }
    if (a.contains("to")) n.attrs.cast_to = parse_dtype(a.at("to").get<std::string>());
    if (a.contains("axes")) n.attrs.axes = a.at("axes").get<std::vector<int>>();
    if (a.contains("keep_dims")) n.attrs.keep_dims = a.at("keep_dims").get<bool>();
    if (a.contains("pads")) {
      for (const auto& p : a.at("pads")) n.attrs.pads.emplace_back(p.at(0).get<std::int64_t>(), p.at(1).get<std::int64_t>());
    }
    if (a.contains("out_scale")) n.attrs.out_scale = a.at("out_scale").get<float>();
  }
  return n;
}

json manifest_json(const ModelBundle& b, const SerializedWeights& sw) {
  json m;
  m["format"] = "edgeinfer-bundle";
  m["format_version"] = std::to_string(kBundleFormatMajor) + "." + std::to_string(kBundleFormatMinor);
  m["name"] = b.meta.name;
  m["variant"] = b.meta.variant;
  m["created"] = b.meta.created;
  m["classes"] = b.meta.classes;
  m["positive_class"] = b.meta.positive_class;
  m["preprocess"] = {{"height", b.meta.preprocess.height},
                     {"width", b.meta.preprocess.width},
                     {"value_range", std::string(to_string(b.meta.preprocess.value_range))},
                     {"resize", "bilinear"}};
  if (b.meta.feature_node) m["feature_node"] = *b.meta.feature_node;

  json g;
  json inputs = json::array();
  for (const auto& s : b.graph.inputs) {
    inputs.push_back({{"id", s.node_id}, {"shape", shape_json(s.shape)}, {"dtype", std::string(to_string(s.dtype))}});
  }
  g["inputs"] = inputs;
  g["outputs"] = b.graph.outputs;
  g["output_dtype"] = std::string(to_string(b.graph.output_dtype));
  json nodes = json::array();
  for (const auto& n : b.graph.nodes) nodes.push_back(node_json(n));
  g["nodes"] = nodes;
  m["graph"] = g;

  json tensors = json::array();
  for (std::size_t i = 0; i < b.weights.size(); ++i) {
    const auto& t = b.weights[i];
    const auto& e = sw.entries[i];
    json tj;
    tj["offset"] = e.offset;
    tj["length"] = e.length;
    tj["dtype"] = std::string(to_string(t.dtype()));
    tj["shape"] = shape_json(t.shape());
    if (t.dtype() == DType::kINT8) {
      json q;
      q["scheme"] = "symmetric";
      q["zero_point"] = 0;
      if (t.quant()->axis) q["axis"] = *t.quant()->axis;
      q["scales_offset"] = e.scales_offset;
      q["scales_count"] = e.scales_count;
      tj["quant"] = q;
    }
    tensors.push_back(tj);
  }
  m["weights"] = {{"file", kWeightsFile}, {"size", sw.blob.size()}, {"sha256", to_hex(b.checksum)}, {"tensors", tensors}};
  return m;
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + p.string(), p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, std::span<const std::uint8_t> bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string(), p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + p.string(), p.string());
}

Tensor tensor_from(const json& tj, std::span<const std::uint8_t> blob, std::size_t index) {
  const auto where = "weight " + std::to_string(index);
  const auto dtype = parse_dtype(tj.at("dtype").get<std::string>());
  const Shape shape = shape_from(tj.at("shape"));
  const auto offset = tj.at("offset").get<std::size_t>();
  const auto length = tj.at("length").get<std::size_t>();
  const std::size_t count = element_count(shape);
  if (offset > blob.size() || length > blob.size() - offset || length != count * byte_width(dtype)) {
    throw Error(ErrorCode::kMalformedBundle, where + " lies outside the weight blob or has the wrong length", where);
  }
  const auto bytes = blob.subspan(offset, length);
  switch (dtype) {
    case DType::kFP32: {
      std::vector<float> v(count);
      for (std::size_t i = 0; i < count; ++i) v[i] = std::bit_cast<float>(get_u32(bytes, 4 * i));
      return Tensor::from_f32(shape, std::move(v));
    }
    case DType::kFP16: {
      std::vector<std::uint16_t> v(count);
      for (std::size_t i = 0; i < count; ++i) {
        v[i] = static_cast<std::uint16_t>(bytes[2 * i] | (static_cast<std::uint16_t>(bytes[2 * i + 1]) << 8));
      }
      return Tensor::from_f16(shape, std::move(v));
    }
    case DType::kINT8: {
      std::vector<std::int8_t> v(count);
      for (std::size_t i = 0; i < count; ++i) v[i] = std::bit_cast<std::int8_t>(bytes[i]);
      const auto& qj = tj.at("quant");
      const auto so = qj.at("scales_offset").get<std::size_t>();
      const auto sc = qj.at("scales_count").get<std::size_t>();
      if (so > blob.size() || sc * 4 > blob.size() - so) {
        throw Error(ErrorCode::kMalformedBundle, where + " scale table lies outside the weight blob", where);
      }
      std::vector<float> scales(sc);
      for (std::size_t i = 0; i < sc; ++i) scales[i] = std::bit_cast<float>(get_u32(blob, so + 4 * i));
      QuantParams q = qj.contains("axis") ? QuantParams::per_channel(qj.at("axis").get<int>(), std::move(scales))
                                          : QuantParams::per_tensor(scales.at(0));
      return Tensor::from_i8(shape, std::move(v), std::move(q));
    }
  }
  throw Error(ErrorCode::kMalformedBundle, "bad dtype", where);
}

}  // namespace

std::string manifest_text(const ModelBundle& b) {
  const auto sw = serialize_weights(b.weights);
  return manifest_json(b, sw).dump(2) + "\n";
}

void save_bundle(const ModelBundle& b, const fs::path& dir) {
  const auto sw = serialize_weights(b.weights);
  if (sha256(sw.blob) != b.checksum) {
    throw Error(ErrorCode::kChecksumMismatch, "bundle checksum is stale; build bundles with make_bundle");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create bundle directory " + dir.string() + ": " + ec.message(), dir.string());
  write_file(dir / kWeightsFile, sw.blob);
  const std::string text = manifest_json(b, sw).dump(2) + "\n";
  write_file(dir / kManifestFile, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ModelBundle load_bundle(const fs::path& dir) {
  const auto manifest_bytes = read_file(dir / kManifestFile);
  json m;
  try {
    m = json::parse(manifest_bytes.begin(), manifest_bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedBundle, std::string("manifest is not valid JSON: ") + e.what(), dir.string());
  }

  try {
    if (m.value("format", "") != "edgeinfer-bundle") {
      throw Error(ErrorCode::kMalformedBundle, "not an edgeinfer bundle manifest", dir.string());
    }
    if (!m.contains("format_version")) throw Error(ErrorCode::kMalformedBundle, "manifest lacks format_version", dir.string());
    const auto version = m.at("format_version").get<std::string>();
    const int major = std::atoi(version.substr(0, version.find('.')).c_str());
    if (major != kBundleFormatMajor) {
      throw Error(ErrorCode::kUnsupportedVersion, "unsupported bundle format version " + version, dir.string());
    }

    ModelBundle b;
    b.meta.name = m.at("name").get<std::string>();
    b.meta.variant = m.at("variant").get<std::string>();
    b.meta.created = m.value("created", "");
    b.meta.classes = m.at("classes").get<std::vector<std::string>>();
    b.meta.positive_class = m.value("positive_class", 0);
    const auto& pp = m.at("preprocess");
    b.meta.preprocess.height = pp.at("height").get<int>();
    b.meta.preprocess.width = pp.at("width").get<int>();
    b.meta.preprocess.value_range = parse_value_range(pp.at("value_range").get<std::string>());
    if (pp.value("resize", "bilinear") != "bilinear") throw Error(ErrorCode::kMalformedBundle, "only bilinear resize is supported");
    if (m.contains("feature_node")) b.meta.feature_node = m.at("feature_node").get<std::string>();

    const auto& g = m.at("graph");
    for (const auto& s : g.at("inputs")) {
      b.graph.inputs.push_back(
          {s.at("id").get<std::string>(), shape_from(s.at("shape")), parse_dtype(s.value("dtype", "fp32"))});
    }
    b.graph.outputs = g.at("outputs").get<std::vector<std::string>>();
    b.graph.output_dtype = parse_dtype(g.value("output_dtype", "fp32"));

    // NoOp nodes carry no data; drop them along with any references to them.
    std::unordered_set<std::string> dropped;
    for (const auto& nj : g.at("nodes")) {
      if (nj.value("op", "") == "NoOp") {
        dropped.insert(nj.at("id").get<std::string>());
        continue;
      }
      b.graph.nodes.push_back(node_from(nj));
    }
    if (!dropped.empty()) {
      for (auto& n : b.graph.nodes) std::erase_if(n.inputs, [&](const std::string& id) { return dropped.contains(id); });
      std::erase_if(b.graph.outputs, [&](const std::string& id) { return dropped.contains(id); });
    }

    const auto& w = m.at("weights");
    const auto blob = read_file(dir / w.value("file", std::string(kWeightsFile)));
    if (blob.size() != w.at("size").get<std::size_t>()) {
      throw Error(ErrorCode::kChecksumMismatch, "weight blob size differs from manifest", dir.string());
    }
    b.checksum = sha256(blob);
    if (to_hex(b.checksum) != w.at("sha256").get<std::string>()) {
      throw Error(ErrorCode::kChecksumMismatch, "weight blob checksum does not match manifest", dir.string());
    }
    std::size_t index = 0;
    for (const auto& tj : w.at("tensors")) b.weights.push_back(tensor_from(tj, blob, index++));

    b.graph = validate_graph(std::move(b.graph), b.weights.size());
    infer_shapes(b.graph, b.weights);
    return b;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedBundle, std::string("malformed manifest: ") + e.what(), dir.string());
  }
}

BundleSize size_of(const ModelBundle& b) {
  const auto sw = serialize_weights(b.weights);
  const std::string text = manifest_json(b, sw).dump(2) + "\n";
  return {text.size() + sw.blob.size(), sw.blob.size()};
}

BundleSize size_of(const fs::path& dir) {
  std::error_code ec;
  const auto manifest = fs::file_size(dir / kManifestFile, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot stat manifest in " + dir.string(), dir.string());
  const auto weights = fs::file_size(dir / kWeightsFile, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot stat weights in " + dir.string(), dir.string());
  return {static_cast<std::size_t>(manifest + weights), static_cast<std::size_t>(weights)};
}

std::string creation_timestamp() {
  std::time_t t = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace edgeinfer
