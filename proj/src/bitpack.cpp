#include "lopro/bitpack.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace lopro {

std::vector<std::uint8_t> pack_bits(std::span<const std::uint32_t> values, unsigned bits) {
    if (bits == 0 || bits > 32) {
        throw std::invalid_argument("pack_bits: width " + std::to_string(bits) + " outside [1, 32]");
    }
    std::vector<std::uint8_t> out(packed_size(values.size(), bits), 0);
    const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
    std::size_t pos = 0;
    for (std::uint32_t v : values) {
        if ((v & ~mask) != 0) {
            throw std::invalid_argument("pack_bits: value " + std::to_string(v) + " does not fit in " +
                                        std::to_string(bits) + " bits");
        }
        std::uint64_t word = v;
        std::size_t bit = pos;
        unsigned left = bits;
        while (left > 0) {
            const unsigned offset = bit % 8;
            const unsigned take = std::min(left, 8U - offset);
            out[bit / 8] |= static_cast<std::uint8_t>((word & ((1U << take) - 1U)) << offset);
            word >>= take;
            bit += take;
            left -= take;
        }
        pos += bits;
    }
    return out;
}

std::vector<std::uint32_t> unpack_bits(std::span<const std::uint8_t> bytes, unsigned bits, std::size_t count) {
    if (bits == 0 || bits > 32) {
        throw std::invalid_argument("unpack_bits: width " + std::to_string(bits) + " outside [1, 32]");
    }
    if (bytes.size() < packed_size(count, bits)) {
        throw std::invalid_argument("unpack_bits: " + std::to_string(bytes.size()) + " bytes cannot hold " +
                                    std::to_string(count) + " values of " + std::to_string(bits) + " bits");
    }
    std::vector<std::uint32_t> out(count);
    std::size_t pos = 0;
    for (auto& v : out) {
        std::uint64_t word = 0;
        unsigned got = 0;
        std::size_t bit = pos;
        while (got < bits) {
            const unsigned offset = bit % 8;
            const unsigned take = std::min(bits - got, 8U - offset);
            const std::uint64_t chunk = (bytes[bit / 8] >> offset) & ((1U << take) - 1U);
            word |= chunk << got;
            got += take;
            bit += take;
        }
        v = static_cast<std::uint32_t>(word);
        pos += bits;
    }
    return out;
}

} // namespace lopro
