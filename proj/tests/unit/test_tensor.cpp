#include <gtest/gtest.h>

#include <cfenv>
#include <cmath>

#include "edgeinfer/fp16.hpp"
#include "edgeinfer/tensor.hpp"
#include "support/gen.hpp"
#include "support/helpers.hpp"

using namespace edgeinfer;

TEST(Tensor, ConstructionChecksShapeAgainstData) {
  const auto t = Tensor::from_f32({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.byte_size(), 24u);
  EXPECT_EQ(t.dtype(), DType::kFP32);
  EXPECT_THROW(Tensor::from_f32({2, 3}, {1, 2}), Error);
  EXPECT_ERROR_CODE(Tensor::from_f32({0, 3}, {}), ErrorCode::kInvalidTensor);
  EXPECT_ERROR_CODE(Tensor::from_i8({2}, {1, 2}, QuantParams::per_tensor(-1.0f)), ErrorCode::kInvalidQuantParams);
  EXPECT_ERROR_CODE(Tensor::from_i8({2, 2}, {1, 2, 3, 4}, QuantParams::per_channel(1, {1.0f})),
                    ErrorCode::kInvalidQuantParams);
}

TEST(Tensor, DtypeNamesParseCaseInsensitively) {
  EXPECT_EQ(parse_dtype("FP16"), DType::kFP16);
  EXPECT_EQ(parse_dtype("int8"), DType::kINT8);
  EXPECT_EQ(to_string(DType::kFP32), "fp32");
  EXPECT_ERROR_CODE(parse_dtype("bf16"), ErrorCode::kInvalidArgument);
}

TEST(Tensor, CastBetweenFloatFormatsRoundsEachElement) {
  testgen::Gen g(3);
  const auto t = g.tensor({4, 5}, -100, 100);
  const auto h = cast(t, DType::kFP16);
  EXPECT_EQ(h.dtype(), DType::kFP16);
  EXPECT_EQ(h.byte_size(), 40u);
  const auto back = cast(h, DType::kFP32);
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(back.f32()[i], round_to_half(t.f32()[i]));
  EXPECT_THROW(cast(t, DType::kINT8), Error);
}

TEST(Tensor, RoundHalfEvenAgreesWithNearbyint) {
  ASSERT_EQ(std::fegetround(), FE_TONEAREST);
  testgen::Gen g(17);
  for (int i = 0; i < 100000; ++i) {
    const double x = g.coin(0.3) ? std::floor(g.uniform(-500, 500)) + 0.5 : g.uniform(-500, 500);
    ASSERT_EQ(round_half_even(x), std::nearbyint(x)) << x;
  }
  EXPECT_EQ(round_half_even(2.5), 2.0);
  EXPECT_EQ(round_half_even(-2.5), -2.0);
  EXPECT_EQ(round_half_even(3.5), 4.0);
}

TEST(Tensor, QuantizeValueSaturatesSymmetrically) {
  EXPECT_EQ(quantize_value(1000.0, 1.0), 127);
  EXPECT_EQ(quantize_value(-1000.0, 1.0), -127);
  EXPECT_EQ(quantize_value(127.0, 1.0), 127);
  EXPECT_EQ(quantize_value(-127.4, 1.0), -127);
  EXPECT_EQ(quantize_value(0.0, 0.5), 0);
  EXPECT_EQ(quantize_value(0.25, 0.5), 0);
  EXPECT_EQ(quantize_value(0.75, 0.5), 2);
}

TEST(Tensor, PerTensorRoundTripErrorIsAtMostHalfAStep) {
  testgen::Gen g(23);
  for (int trial = 0; trial < 50; ++trial) {
    const float bound = static_cast<float>(g.uniform(0.01, 50.0));
    const float scale = bound / 127.0f;
    const auto t = g.tensor({257}, -bound, bound);
    const auto q = quantize_linear(t, QuantParams::per_tensor(scale));
    ASSERT_EQ(q.dtype(), DType::kINT8);
    ASSERT_EQ(q.quant()->zero_point, 0);
    const auto back = dequantize_linear(q);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      ASSERT_LE(std::abs(back.f32()[i] - t.f32()[i]), scale / 2 * (1 + 1e-5f));
    }
  }
}

TEST(Tensor, PerChannelUsesTheChannelScale) {
  // Shape (2, 3) quantized along axis 1: three channels.
  const auto t = Tensor::from_f32({2, 3}, {1.0f, 2.0f, 4.0f, -1.0f, -2.0f, -4.0f});
  const QuantParams q = QuantParams::per_channel(1, {1.0f / 127, 2.0f / 127, 4.0f / 127});
  const auto i8 = quantize_linear(t, q);
  for (auto v : i8.i8()) EXPECT_EQ(std::abs(v), 127);
  EXPECT_FLOAT_EQ(element_scale(q, t.shape(), 4), 2.0f / 127);
  const auto back = dequantize_linear(i8).to_f32_values();
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(back[i], t.f32()[i], 1e-6);
}

TEST(Tensor, RealViewOfEveryPrecision) {
  const auto h = Tensor::from_f16({2}, {float_to_half(1.5f), float_to_half(-2.0f)});
  EXPECT_EQ(h.to_f32_values(), (std::vector<float>{1.5f, -2.0f}));
  const auto q = Tensor::from_i8({2}, {10, -20}, QuantParams::per_tensor(0.5f));
  EXPECT_EQ(q.to_f32_values(), (std::vector<float>{5.0f, -10.0f}));
  EXPECT_THROW(q.f32(), Error);
}
