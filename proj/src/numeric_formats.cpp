#include "lopro/numeric_formats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lopro {

namespace {

// Round |a| to a binary float with `mantissa_bits` explicit bits whose smallest
// normal exponent is `min_exp` (value 2^min_exp); below that the grid is uniform.
double round_magnitude(double a, int mantissa_bits, int min_exp) noexcept {
    if (a == 0.0) {
        return 0.0;
    }
    int e = 0;
    std::frexp(a, &e); // a = f * 2^e, f in [0.5, 1)
    const int lead = std::max(e - 1, min_exp);
    const double quantum = std::ldexp(1.0, lead - mantissa_bits);
    return std::nearbyint(a / quantum) * quantum;
}

} // namespace

double e4m3_round(double x) noexcept {
    if (std::isnan(x)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double a = std::abs(x);
    if (a >= kE4m3Max) {
        return std::copysign(kE4m3Max, x);
    }
    const double r = std::min(round_magnitude(a, 3, -6), kE4m3Max);
    return std::copysign(r, x);
}

std::uint8_t e4m3_encode(double x) noexcept {
    if (std::isnan(x)) {
        return 0x7F;
    }
    const double r = e4m3_round(x);
    const std::uint8_t sign = std::signbit(r) ? 0x80 : 0x00;
    const double a = std::abs(r);
    if (a == 0.0) {
        return sign;
    }
    if (a < 0x1.0p-6) {
        return static_cast<std::uint8_t>(sign | static_cast<std::uint8_t>(a * 0x1.0p9));
    }
    int e = 0;
    const double f = std::frexp(a, &e); // a = (2f) * 2^(e-1), 2f in [1, 2)
    const auto exp_field = static_cast<std::uint8_t>(e - 1 + 7);
    const auto mant_field = static_cast<std::uint8_t>((2.0 * f - 1.0) * 8.0);
    return static_cast<std::uint8_t>(sign | (exp_field << 3) | mant_field);
}

double e4m3_decode(std::uint8_t bits) noexcept {
    const bool negative = (bits & 0x80) != 0;
    const int exp_field = (bits >> 3) & 0x0F;
    const int mant_field = bits & 0x07;
    if (exp_field == 0x0F && mant_field == 0x07) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double mag = 0.0;
    if (exp_field == 0) {
        mag = std::ldexp(static_cast<double>(mant_field), -9);
    } else {
        mag = std::ldexp(1.0 + mant_field / 8.0, exp_field - 7);
    }
    return negative ? -mag : mag;
}

double half_round(double x) noexcept {
    if (std::isnan(x) || std::isinf(x)) {
        return x;
    }
    const double r = round_magnitude(std::abs(x), 10, -14);
    // 65520 is the rounding midpoint between 65504 and 2^16.
    if (r > kHalfMax) {
        return std::copysign(std::numeric_limits<double>::infinity(), x);
    }
    return std::copysign(r, x);
}

std::uint16_t half_encode(double x) noexcept {
    if (std::isnan(x)) {
        return 0x7E00;
    }
    const double r = half_round(x);
    const std::uint16_t sign = std::signbit(r) ? 0x8000 : 0x0000;
    const double a = std::abs(r);
    if (std::isinf(a)) {
        return static_cast<std::uint16_t>(sign | 0x7C00);
    }
    if (a == 0.0) {
        return sign;
    }
    if (a < 0x1.0p-14) {
        return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(a * 0x1.0p24));
    }
    int e = 0;
    const double f = std::frexp(a, &e);
    const auto exp_field = static_cast<std::uint16_t>(e - 1 + 15);
    const auto mant_field = static_cast<std::uint16_t>((2.0 * f - 1.0) * 1024.0);
    return static_cast<std::uint16_t>(sign | (exp_field << 10) | mant_field);
}

double half_decode(std::uint16_t bits) noexcept {
    const bool negative = (bits & 0x8000) != 0;
    const int exp_field = (bits >> 10) & 0x1F;
    const int mant_field = bits & 0x3FF;
    double mag = 0.0;
    if (exp_field == 0x1F) {
        mag = mant_field == 0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
    } else if (exp_field == 0) {
        mag = std::ldexp(static_cast<double>(mant_field), -24);
    } else {
        mag = std::ldexp(1.0 + mant_field / 1024.0, exp_field - 15);
    }
    return negative ? -mag : mag;
}

} // namespace lopro
