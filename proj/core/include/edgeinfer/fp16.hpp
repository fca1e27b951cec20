#pragma once

#include <cstdint>

namespace edgeinfer {

/// Largest finite binary16 value.
inline constexpr float kHalfMax = 65504.0f;

/// FP32 -> binary16 bits. Round-to-nearest-even; finite values beyond the
/// FP16 range saturate to +/-65504. Infinities stay infinite, NaN stays NaN.
std::uint16_t float_to_half(float value) noexcept;

/// binary16 bits -> FP32. Exact for every input.
float half_to_float(std::uint16_t bits) noexcept;

/// Round an FP32 value to the nearest FP16-representable FP32 value.
inline float round_to_half(float value) noexcept { return half_to_float(float_to_half(value)); }

}  // namespace edgeinfer
