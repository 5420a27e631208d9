#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lopro {

/// Packs `bits`-wide values into a little-endian bit stream: value i occupies
/// stream bits [i*bits, (i+1)*bits), stream bit k is bit (k % 8) of byte k / 8.
/// Output is exactly ceil(values.size() * bits / 8) bytes; spare high bits are zero.
std::vector<std::uint8_t> pack_bits(std::span<const std::uint32_t> values, unsigned bits);

/// Inverse of pack_bits. Throws std::invalid_argument if `bytes` is too short.
std::vector<std::uint32_t> unpack_bits(std::span<const std::uint8_t> bytes, unsigned bits, std::size_t count);

[[nodiscard]] constexpr std::size_t packed_size(std::size_t count, unsigned bits) noexcept {
    return (count * bits + 7) / 8;
}

} // namespace lopro
