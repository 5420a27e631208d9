#pragma once

#include <cstdint>

namespace lopro {

// 8-bit float e4m3 (OCP "FN" variant): 1 sign, 4 exponent (bias 7), 3 mantissa,
// subnormals, max magnitude 448, no infinities, NaN = S.1111.111.
inline constexpr double kE4m3Max = 448.0;

/// Nearest e4m3 value under round-to-nearest-even; saturates to +-448; NaN stays NaN.
double e4m3_round(double x) noexcept;
/// Bit pattern of e4m3_round(x). NaN encodes as 0x7F.
std::uint8_t e4m3_encode(double x) noexcept;
double e4m3_decode(std::uint8_t bits) noexcept;

// IEEE 754 binary16.
inline constexpr double kHalfMax = 65504.0;

/// Nearest binary16 value (round-to-nearest-even, overflow to infinity).
double half_round(double x) noexcept;
std::uint16_t half_encode(double x) noexcept;
double half_decode(std::uint16_t bits) noexcept;

/// Nearest binary32 value.
inline double float_round(double x) noexcept { return static_cast<double>(static_cast<float>(x)); }

} // namespace lopro
