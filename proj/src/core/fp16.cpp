#include "ioff/fp16.hpp"

#include <bit>
#include <cstring>

#include "ioff/error.hpp"

namespace ioff {

Half to_half(float value) noexcept {
  const std::uint32_t f = std::bit_cast<std::uint32_t>(value);
  const std::uint16_t sign = static_cast<std::uint16_t>((f >> 16) & 0x8000u);
  const std::uint32_t exp = (f >> 23) & 0xFFu;
  std::uint32_t mant = f & 0x7FFFFFu;

  if (exp == 0xFFu) {
    if (mant == 0) return Half{static_cast<std::uint16_t>(sign | 0x7C00u)};
    // Keep the top payload bits and force the quiet bit.
    return Half{static_cast<std::uint16_t>(sign | 0x7E00u | (mant >> 13))};
  }

  // Unbiased exponent, rebias for binary16 (bias 15).
  const int e = static_cast<int>(exp) - 127 + 15;

  if (e >= 0x1F) return Half{static_cast<std::uint16_t>(sign | 0x7C00u)};

  if (e <= 0) {
    // Subnormal or underflow to zero. Shift includes the implicit bit.
    if (e < -10) return Half{sign};
    mant |= 0x800000u;
    const unsigned shift = static_cast<unsigned>(14 - e);
    std::uint32_t half_mant = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half_mant & 1u))) ++half_mant;
    // A carry into bit 10 yields the smallest normal, which is the right encoding.
    return Half{static_cast<std::uint16_t>(sign | half_mant)};
  }

  std::uint32_t half_bits = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (half_bits & 1u))) ++half_bits;
  // Mantissa carry propagates into the exponent; 0x7C00 is infinity.
  return Half{static_cast<std::uint16_t>(sign | half_bits)};
}

float to_float(Half value) noexcept {
  const std::uint32_t sign = static_cast<std::uint32_t>(value.bits & 0x8000u) << 16;
  const std::uint32_t exp = (value.bits >> 10) & 0x1Fu;
  std::uint32_t mant = value.bits & 0x3FFu;

  std::uint32_t f;
  if (exp == 0x1Fu) {
    f = sign | 0x7F800000u | (mant << 13);
  } else if (exp != 0) {
    f = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  } else if (mant == 0) {
    f = sign;
  } else {
    // Normalize the subnormal.
    int e = -1;
    do {
      ++e;
      mant <<= 1;
    } while ((mant & 0x400u) == 0);
    f = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3FFu) << 13);
  }
  return std::bit_cast<float>(f);
}

void downscale_rne(std::span<const float> src, std::span<Half> dst) {
  if (src.size() != dst.size()) throw InvalidArgument("downscale_rne: size mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = to_half(src[i]);
}

void upscale(std::span<const Half> src, std::span<float> dst) {
  if (src.size() != dst.size()) throw InvalidArgument("upscale: size mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = to_float(src[i]);
}

std::vector<Half> downscale_rne(std::span<const float> src) {
  std::vector<Half> out(src.size());
  downscale_rne(src, std::span<Half>(out));
  return out;
}

std::vector<float> upscale(std::span<const Half> src) {
  std::vector<float> out(src.size());
  upscale(src, std::span<float>(out));
  return out;
}

}  // namespace ioff
