#include "edgeinfer/tensor.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "edgeinfer/error.hpp"
#include "edgeinfer/fp16.hpp"

namespace edgeinfer {

std::string_view to_string(DType dtype) {
  switch (dtype) {
    case DType::kFP32: return "fp32";
    case DType::kFP16: return "fp16";
    case DType::kINT8: return "int8";
  }
  return "?";
}

DType parse_dtype(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "fp32") return DType::kFP32;
  if (lower == "fp16") return DType::kFP16;
  if (lower == "int8") return DType::kINT8;
  throw Error(ErrorCode::kInvalidArgument, "unknown dtype '" + std::string(text) + "'");
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

QuantParams QuantParams::per_tensor(float scale) {
  if (!(scale > 0.0f) || !std::isfinite(scale)) {
    throw Error(ErrorCode::kInvalidQuantParams, "scale must be positive and finite");
  }
  QuantParams q;
  q.scale = scale;
  return q;
}

QuantParams QuantParams::per_channel(int axis, std::vector<float> scales) {
  if (scales.empty()) throw Error(ErrorCode::kInvalidQuantParams, "per-channel scales are empty");
  for (float s : scales) {
    if (!(s > 0.0f) || !std::isfinite(s)) {
      throw Error(ErrorCode::kInvalidQuantParams, "per-channel scale must be positive and finite");
    }
  }
  QuantParams q;
  q.axis = axis;
  q.scale = *std::max_element(scales.begin(), scales.end());
  q.scales = std::move(scales);
  return q;
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d <= 0) throw Error(ErrorCode::kInvalidTensor, "non-positive dimension in shape " + shape_to_string(shape));
  }
}

void check_quant(const QuantParams& q, const Shape& shape) {
  if (q.zero_point != 0) throw Error(ErrorCode::kInvalidQuantParams, "zero_point must be 0 (symmetric scheme)");
  if (q.is_per_channel()) {
    const int axis = *q.axis;
    if (axis < 0 || static_cast<std::size_t>(axis) >= shape.size()) {
      throw Error(ErrorCode::kInvalidQuantParams, "quantization axis out of range for shape " + shape_to_string(shape));
    }
    if (static_cast<std::int64_t>(q.scales.size()) != shape[static_cast<std::size_t>(axis)]) {
      throw Error(ErrorCode::kInvalidQuantParams, "per-channel scale count does not match extent along axis");
    }
    for (float s : q.scales) {
      if (!(s > 0.0f)) throw Error(ErrorCode::kInvalidQuantParams, "per-channel scale must be positive");
    }
  } else if (!(q.scale > 0.0f)) {
    throw Error(ErrorCode::kInvalidQuantParams, "scale must be positive");
  }
}

}  // namespace

Tensor::Tensor(Shape shape, DType dtype, Storage data, std::optional<QuantParams> quant)
    : shape_(std::move(shape)), dtype_(dtype), data_(std::move(data)), quant_(std::move(quant)) {
  check_shape(shape_);
  const std::size_t expected = element_count(shape_);
  const std::size_t actual = std::visit([](const auto& v) { return v.size(); }, data_);
  if (expected != actual) {
    throw Error(ErrorCode::kInvalidTensor, "buffer holds " + std::to_string(actual) + " elements but shape " +
                                               shape_to_string(shape_) + " needs " + std::to_string(expected));
  }
  if (dtype_ == DType::kINT8) {
    if (!quant_) throw Error(ErrorCode::kInvalidTensor, "INT8 tensor without quantization parameters");
    check_quant(*quant_, shape_);
  } else if (quant_) {
    throw Error(ErrorCode::kInvalidTensor, "floating-point tensor must not carry quantization parameters");
  }
}

Tensor Tensor::from_f32(Shape shape, std::vector<float> data) {
  return Tensor(std::move(shape), DType::kFP32, std::move(data), std::nullopt);
}

Tensor Tensor::from_f16(Shape shape, std::vector<std::uint16_t> bits) {
  return Tensor(std::move(shape), DType::kFP16, std::move(bits), std::nullopt);
}

Tensor Tensor::from_i8(Shape shape, std::vector<std::int8_t> data, QuantParams quant) {
  return Tensor(std::move(shape), DType::kINT8, std::move(data), std::move(quant));
}

std::size_t Tensor::numel() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, data_);
}

std::span<const float> Tensor::f32() const {
  if (dtype_ != DType::kFP32) throw Error(ErrorCode::kDtypeMismatch, "expected fp32 tensor, got " + std::string(to_string(dtype_)));
  return std::get<std::vector<float>>(data_);
}

std::span<const std::uint16_t> Tensor::f16() const {
  if (dtype_ != DType::kFP16) throw Error(ErrorCode::kDtypeMismatch, "expected fp16 tensor, got " + std::string(to_string(dtype_)));
  return std::get<std::vector<std::uint16_t>>(data_);
}

std::span<const std::int8_t> Tensor::i8() const {
  if (dtype_ != DType::kINT8) throw Error(ErrorCode::kDtypeMismatch, "expected int8 tensor, got " + std::string(to_string(dtype_)));
  return std::get<std::vector<std::int8_t>>(data_);
}

std::vector<float> Tensor::to_f32_values() const {
  switch (dtype_) {
    case DType::kFP32: {
      auto s = f32();
      return {s.begin(), s.end()};
    }
    case DType::kFP16: {
      auto s = f16();
      std::vector<float> out(s.size());
      std::transform(s.begin(), s.end(), out.begin(), half_to_float);
      return out;
    }
    case DType::kINT8: {
      const Tensor real = dequantize_linear(*this);
      auto s = real.f32();
      return {s.begin(), s.end()};
    }
  }
  return {};
}

float element_scale(const QuantParams& q, const Shape& shape, std::size_t index) {
  if (!q.is_per_channel()) return q.scale;
  const auto axis = static_cast<std::size_t>(*q.axis);
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= static_cast<std::size_t>(shape[d]);
  const std::size_t channel = (index / inner) % static_cast<std::size_t>(shape[axis]);
  return q.scales[channel];
}

Tensor cast(const Tensor& t, DType target) {
  if (t.dtype() == DType::kINT8 || target == DType::kINT8) {
    throw Error(ErrorCode::kUnsupportedCast, "integer casts go through quantize_linear/dequantize_linear");
  }
  if (t.dtype() == target) return t;
  if (target == DType::kFP16) {
    auto src = t.f32();
    std::vector<std::uint16_t> bits(src.size());
    std::transform(src.begin(), src.end(), bits.begin(), float_to_half);
    return Tensor::from_f16(t.shape(), std::move(bits));
  }
  auto src = t.f16();
  std::vector<float> out(src.size());
  std::transform(src.begin(), src.end(), out.begin(), half_to_float);
  return Tensor::from_f32(t.shape(), std::move(out));
}

Tensor quantize_linear(const Tensor& t, const QuantParams& q) {
  check_quant(q, t.shape());
  auto src = t.f32();
  std::vector<std::int8_t> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[i] = quantize_value(src[i], element_scale(q, t.shape(), i));
  }
  return Tensor::from_i8(t.shape(), std::move(out), q);
}

Tensor dequantize_linear(const Tensor& t) {
  if (t.dtype() != DType::kINT8 || !t.quant()) {
    throw Error(ErrorCode::kInvalidTensor, "dequantize_linear needs an INT8 tensor with quantization parameters");
  }
  const auto& q = *t.quant();
  auto src = t.i8();
  std::vector<float> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[i] = static_cast<float>(src[i]) * element_scale(q, t.shape(), i);
  }
  return Tensor::from_f32(t.shape(), std::move(out));
}

}  // namespace edgeinfer
