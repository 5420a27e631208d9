#include "doctest.h"

#include "lopro/bitpack.hpp"
#include "lopro/random.hpp"

#include <stdexcept>

TEST_CASE("little-endian bit order") {
    const std::vector<std::uint32_t> v{1, 2, 3, 0};
    const auto b = lopro::pack_bits(v, 2);
    REQUIRE(b.size() == 1);
    CHECK(b[0] == 0b00111001);
    const auto three = lopro::pack_bits(std::vector<std::uint32_t>{5, 7, 1}, 3);
    REQUIRE(three.size() == 2);
    CHECK(three[0] == 0b01111101);
    CHECK(three[1] == 0);
    const auto carry = lopro::pack_bits(std::vector<std::uint32_t>{0, 0, 4}, 3);
    CHECK(carry[1] == 0b00000001);
}

TEST_CASE("sizes are exact") {
    CHECK(lopro::packed_size(32, 2) == 8);
    CHECK(lopro::packed_size(3, 3) == 2);
    CHECK(lopro::packed_size(0, 8) == 0);
    CHECK(lopro::pack_bits(std::vector<std::uint32_t>(32, 3), 2).size() == 8);
}

TEST_CASE("round trip for every width up to 16") {
    lopro::GaussianSource g(4);
    for (unsigned bits = 1; bits <= 16; ++bits) {
        for (std::size_t count : {0U, 1U, 7U, 64U, 1001U}) {
            std::vector<std::uint32_t> v(count);
            for (auto& x : v) {
                x = static_cast<std::uint32_t>(g.uniform_index(std::size_t{1} << bits));
            }
            const auto packed = lopro::pack_bits(v, bits);
            CHECK(packed.size() == lopro::packed_size(count, bits));
            CHECK(lopro::unpack_bits(packed, bits, count) == v);
        }
    }
}

TEST_CASE("invalid input") {
    CHECK_THROWS_AS(lopro::pack_bits(std::vector<std::uint32_t>{4}, 2), std::invalid_argument);
    CHECK_THROWS_AS(lopro::pack_bits(std::vector<std::uint32_t>{0}, 0), std::invalid_argument);
    CHECK_THROWS_AS(lopro::unpack_bits(std::vector<std::uint8_t>{0}, 3, 4), std::invalid_argument);
}
