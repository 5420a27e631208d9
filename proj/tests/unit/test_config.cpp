#include "doctest.h"

#include "lopro/config.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

using lopro::PipelineConfig;

namespace {

std::string error_of(const std::string& text) {
    try {
        (void)lopro::parse_config_json(text);
    } catch (const std::invalid_argument& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("keys mirror flag names and override the base") {
    PipelineConfig base;
    base.rank = 4;
    base.seed = 9;
    const auto c = lopro::parse_config_json(
        R"({"bits": 3, "group-size": 64, "it": 2, "b-i": 32, "b-h": 16, "quantizer": "vq", "vq-dim": 2,
            "precision": "full", "symmetric": false, "permute": false, "damp": 0.05, "original-bits": 32,
            "calib-synth": "64,128,2,4,1"})",
        base);
    CHECK(c.bits == 3);
    CHECK(c.group_size == 64);
    CHECK(c.iterations == 2);
    CHECK(c.identity_block == 32);
    CHECK(c.hadamard_block == 16);
    CHECK(c.quantizer == lopro::QuantizerKind::vq);
    CHECK(c.vq_dim == 2);
    CHECK(c.precision == lopro::FactorPrecision::full);
    CHECK_FALSE(c.symmetric);
    CHECK_FALSE(c.permute);
    CHECK(c.damp == 0.05);
    CHECK(c.original_bits == 32);
    CHECK(c.calib_synth == "64,128,2,4,1");
    CHECK(c.rank == 4);
    CHECK(c.seed == 9);
}

TEST_CASE("bad keys and values are named") {
    CHECK(error_of(R"({"bitz": 2})").find("bitz") != std::string::npos);
    CHECK(error_of(R"({"rank": "many"})").find("rank") != std::string::npos);
    CHECK(error_of(R"({"rank": -1})").find("rank") != std::string::npos);
    CHECK(error_of(R"({"quantizer": "awq"})").find("quantizer") != std::string::npos);
    CHECK(error_of(R"({"permute": 1})").find("permute") != std::string::npos);
    CHECK_FALSE(error_of("[1, 2]").empty());
    CHECK_FALSE(error_of("{").empty());
}

TEST_CASE("json round trip") {
    PipelineConfig c;
    c.bits = 4;
    c.rank = 8;
    c.quantizer = lopro::QuantizerKind::rtn;
    c.name = "blk.0.q";
    c.seed = 123456789012345ULL;
    c.exponent = 1.75;
    CHECK(lopro::parse_config_json(lopro::config_to_json(c)) == c);
}

TEST_CASE("config files") {
    const auto path = std::filesystem::temp_directory_path() / "lopro_config_test.json";
    {
        std::ofstream(path) << R"({"rank": 2})";
    }
    CHECK(lopro::load_config_file(path).rank == 2);
    std::filesystem::remove(path);
    CHECK_THROWS(lopro::load_config_file(path));
}

TEST_CASE("synthetic calibration spec") {
    const auto s = lopro::parse_synth_spec("64,256,4,10,7");
    CHECK(s.channels == 64);
    CHECK(s.tokens == 256);
    CHECK(s.outliers == 4);
    CHECK(s.gain == 10.0);
    CHECK(s.seed == 7);
    CHECK_THROWS_AS(lopro::parse_synth_spec("64,256,4"), std::invalid_argument);
    CHECK_THROWS_AS(lopro::parse_synth_spec("64,256,4,x,1"), std::invalid_argument);
    CHECK_THROWS_AS(lopro::parse_synth_spec("0,256,0,1,1"), std::invalid_argument);
    CHECK_THROWS_AS(lopro::parse_synth_spec("8,16,9,1,1"), std::invalid_argument);
}
