#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace edgeinfer {

enum class DType : std::uint8_t { kFP32, kFP16, kINT8 };

constexpr std::size_t byte_width(DType dtype) noexcept {
  switch (dtype) {
    case DType::kFP32: return 4;
    case DType::kFP16: return 2;
    case DType::kINT8: return 1;
  }
  return 0;
}

std::string_view to_string(DType dtype);
/// Accepts "fp32", "fp16", "int8" (case-insensitive). Throws invalid-argument.
DType parse_dtype(std::string_view text);

using Shape = std::vector<std::int64_t>;

std::size_t element_count(const Shape& shape);
std::string shape_to_string(const Shape& shape);

inline constexpr int kInt8Max = 127;

/// Symmetric linear quantization parameters. zero_point is always 0; the
/// field exists so serialized forms are explicit about it.
struct QuantParams {
  float scale = 1.0f;
  std::int32_t zero_point = 0;
  std::optional<int> axis;
  std::vector<float> scales;

  static QuantParams per_tensor(float scale);
  static QuantParams per_channel(int axis, std::vector<float> scales);

  bool is_per_channel() const noexcept { return axis.has_value(); }
  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

/// Round-half-to-even independent of the floating-point environment.
inline double round_half_even(double x) noexcept {
  const double lower = std::floor(x);
  const double frac = x - lower;
  if (frac > 0.5) return lower + 1.0;
  if (frac < 0.5) return lower;
  return std::fmod(lower, 2.0) == 0.0 ? lower : lower + 1.0;
}

/// Quantize one real value at `scale`: clamp(round_half_even(x/scale), -127, 127).
inline std::int8_t quantize_value(double x, double scale) noexcept {
  const double q = round_half_even(x / scale);
  if (std::isnan(q)) return 0;
  if (q >= kInt8Max) return static_cast<std::int8_t>(kInt8Max);
  if (q <= -kInt8Max) return static_cast<std::int8_t>(-kInt8Max);
  return static_cast<std::int8_t>(q);
}

/// Immutable n-dimensional array with an explicit element precision.
/// FP16 elements are stored as IEEE binary16 bit patterns.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_f32(Shape shape, std::vector<float> data);
  static Tensor from_f16(Shape shape, std::vector<std::uint16_t> bits);
  static Tensor from_i8(Shape shape, std::vector<std::int8_t> data, QuantParams quant);
  static Tensor scalar(float value) { return from_f32({1}, {value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  DType dtype() const noexcept { return dtype_; }
  std::size_t numel() const noexcept;
  std::size_t byte_size() const noexcept { return numel() * byte_width(dtype_); }
  const std::optional<QuantParams>& quant() const noexcept { return quant_; }

  std::span<const float> f32() const;
  std::span<const std::uint16_t> f16() const;
  std::span<const std::int8_t> i8() const;

  /// Real-valued view of any precision (FP16 widened, INT8 dequantized).
  std::vector<float> to_f32_values() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  using Storage = std::variant<std::vector<float>, std::vector<std::uint16_t>, std::vector<std::int8_t>>;

  Tensor(Shape shape, DType dtype, Storage data, std::optional<QuantParams> quant);

  Shape shape_;
  DType dtype_ = DType::kFP32;
  Storage data_;
  std::optional<QuantParams> quant_;
};

/// Precision conversion between floating formats. Integer conversions go
/// through quantize_linear / dequantize_linear and are rejected here.
Tensor cast(const Tensor& t, DType target);

/// FP32 -> INT8, per-tensor or per-channel according to `q`.
Tensor quantize_linear(const Tensor& t, const QuantParams& q);

/// INT8 -> FP32 using the tensor's own QuantParams.
Tensor dequantize_linear(const Tensor& t);

/// Scale for element `index` of an INT8 tensor with shape `shape`.
float element_scale(const QuantParams& q, const Shape& shape, std::size_t index);

}  // namespace edgeinfer
