#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "edgeinfer/graph.hpp"
#include "edgeinfer/tensor.hpp"

// Reference CPU kernels. Layout is NHWC for activations, (kh, kw, in, out)
// for Conv2D kernels and (kh, kw, channels, multiplier) for depthwise ones.
// Callers pass the output shape (from infer_node_shape).
namespace edgeinfer::kernels {

struct ConvParams {
  std::array<int, 2> strides{1, 1};
  Padding padding = Padding::kValid;
};

/// Leading (top, left) padding implied by SAME/VALID for a given output size.
std::array<std::int64_t, 2> conv_padding_before(const Shape& x, const Shape& k, const Shape& out, const ConvParams& p);

std::vector<float> conv2d(std::span<const float> x, const Shape& xs, std::span<const float> k, const Shape& ks,
                          const ConvParams& p, const Shape& os);
std::vector<float> depthwise_conv2d(std::span<const float> x, const Shape& xs, std::span<const float> k,
                                    const Shape& ks, const ConvParams& p, const Shape& os);
std::vector<float> matmul(std::span<const float> a, const Shape& as, std::span<const float> b, const Shape& bs);
std::vector<float> add(std::span<const float> a, const Shape& as, std::span<const float> b, const Shape& bs,
                       const Shape& os);
std::vector<float> mul(std::span<const float> a, const Shape& as, std::span<const float> b, const Shape& bs,
                       const Shape& os);
std::vector<float> relu6(std::span<const float> x);
std::vector<float> mean(std::span<const float> x, const Shape& xs, std::span<const int> axes);
std::vector<float> pad(std::span<const float> x, const Shape& xs,
                       std::span<const std::pair<std::int64_t, std::int64_t>> pads, const Shape& os);

/// Index into a trailing-axis-broadcast operand for flat output index `i`.
std::size_t broadcast_index(std::size_t i, std::size_t operand_numel, std::size_t out_numel);

// INT8 kernels: 32-bit integer accumulation, then one requantization to
// `out_scale` with round-half-to-even and saturation to [-127, 127].

/// Weight scales are per output channel (Conv2D/MatMul) or per input
/// channel (depthwise, shared across the multiplier).
std::vector<std::int8_t> conv2d_i8(std::span<const std::int8_t> x, const Shape& xs, float x_scale,
                                   std::span<const std::int8_t> k, const Shape& ks, std::span<const float> k_scales,
                                   const ConvParams& p, const Shape& os, float out_scale);
std::vector<std::int8_t> depthwise_conv2d_i8(std::span<const std::int8_t> x, const Shape& xs, float x_scale,
                                             std::span<const std::int8_t> k, const Shape& ks,
                                             std::span<const float> k_scales, const ConvParams& p, const Shape& os,
                                             float out_scale);
std::vector<std::int8_t> matmul_i8(std::span<const std::int8_t> a, const Shape& as, float a_scale,
                                   std::span<const std::int8_t> b, const Shape& bs, std::span<const float> b_scales,
                                   float out_scale);
std::vector<std::int8_t> add_i8(std::span<const std::int8_t> a, float a_scale, std::span<const std::int8_t> b,
                                float b_scale, std::size_t out_numel, float out_scale);
/// Adds a real-valued bias, first rounded to 32-bit integers at `a_scale`.
std::vector<std::int8_t> add_bias_i8(std::span<const std::int8_t> a, float a_scale, std::span<const float> bias,
                                     float out_scale);
std::vector<std::int8_t> mul_i8(std::span<const std::int8_t> a, float a_scale, std::span<const std::int8_t> b,
                                float b_scale, std::size_t out_numel, float out_scale);
std::vector<std::int8_t> relu6_i8(std::span<const std::int8_t> x, float x_scale, float out_scale);
std::vector<std::int8_t> mean_i8(std::span<const std::int8_t> x, const Shape& xs, float x_scale,
                                 std::span<const int> axes, float out_scale);
std::vector<std::int8_t> pad_i8(std::span<const std::int8_t> x, const Shape& xs, float x_scale,
                                std::span<const std::pair<std::int64_t, std::int64_t>> pads, const Shape& os,
                                float out_scale);
std::vector<std::int8_t> requantize(std::span<const std::int8_t> x, float x_scale, float out_scale);

/// clamp(round_half_even(acc * multiplier), -127, 127)
std::int8_t requantize_value(double acc, double multiplier) noexcept;

}  // namespace edgeinfer::kernels
