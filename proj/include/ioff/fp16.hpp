#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ioff {

enum class Precision : std::uint8_t { FP16, FP32 };

// IEEE binary16 value held as its bit pattern.
struct Half {
  std::uint16_t bits = 0;

  friend bool operator==(Half, Half) = default;
};

/// Rounds a binary32 value to binary16, round-to-nearest-even.
/// Overflow goes to signed infinity, subnormal results are kept, NaN stays
/// NaN (quiet, payload truncated).
Half to_half(float value) noexcept;

/// Exact widening of a binary16 value.
float to_float(Half value) noexcept;

inline bool is_finite(Half h) noexcept { return (h.bits & 0x7C00u) != 0x7C00u; }

std::vector<Half> downscale_rne(std::span<const float> src);
std::vector<float> upscale(std::span<const Half> src);

// In-place variants over caller-owned buffers; sizes must match.
void downscale_rne(std::span<const float> src, std::span<Half> dst);
void upscale(std::span<const Half> src, std::span<float> dst);

}  // namespace ioff
