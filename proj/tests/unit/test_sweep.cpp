#include "doctest.h"

#include "lopro/sweep.hpp"
#include "lopro/synthetic.hpp"

#include <cstdlib>
#include <stdexcept>

using lopro::PipelineConfig;
using lopro::SweepAxis;

namespace {

lopro::SweepInput input(std::uint64_t seed, std::size_t n) {
    lopro::SyntheticSpec s;
    s.rows = n;
    s.cols = n;
    s.tokens = 2 * n;
    s.seed = seed;
    auto l = lopro::make_synthetic_layer(s);
    return {std::move(l.weights), std::move(l.stats)};
}

PipelineConfig base_config() {
    PipelineConfig c;
    c.identity_block = 64;
    c.hadamard_block = 64;
    c.group_size = 64;
    return c;
}

} // namespace

TEST_CASE("rank sweep loss is non-increasing") {
    const std::vector<std::string> ranks{"8", "16", "32", "64"};
    int ok = 0;
    int pairs = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto rows = lopro::run_ablation_sweep(SweepAxis::rank, ranks, base_config(), input(seed, 256));
        for (std::size_t i = 1; i < rows.size(); ++i) {
            REQUIRE(rows[i].ok);
            ok += rows[i].loss <= rows[i - 1].loss ? 1 : 0;
            ++pairs;
        }
    }
    CHECK(ok >= (pairs * 9 + 9) / 10);
}

TEST_CASE("iteration sweep shows diminishing returns") {
    const std::vector<std::string> its{"1", "8"};
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto rows = lopro::run_ablation_sweep(SweepAxis::iterations, its, base_config(), input(100 + seed, 128));
        ok += rows[1].loss <= rows[0].loss * 1.05 ? 1 : 0;
    }
    CHECK(ok >= 16);
}

TEST_CASE("single-value sweep equals a direct run") {
    const auto in = input(5, 128);
    const auto rows = lopro::run_ablation_sweep(SweepAxis::block_size, std::vector<std::string>{"32:32"},
                                                base_config(), in);
    PipelineConfig c = base_config();
    c.identity_block = 32;
    c.hadamard_block = 32;
    const auto direct = lopro::quantize_layer_pipeline(in.weights, in.stats, c);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].loss == direct.loss);
    CHECK(rows[0].bits.measured == direct.bits.measured);
    CHECK(rows[0].container_bytes == direct.container.size());
}

TEST_CASE("rows are order-stable and independent of worker count") {
    const auto in = input(6, 128);
    const std::vector<std::string> vals{"rtn", "gptq", "vq", "rtn"};
    const auto one = lopro::run_ablation_sweep(SweepAxis::quantizer, vals, base_config(), in, 1);
    const auto four = lopro::run_ablation_sweep(SweepAxis::quantizer, vals, base_config(), in, 4);
    CHECK(lopro::format_sweep_jsonl(SweepAxis::quantizer, one, false) ==
          lopro::format_sweep_jsonl(SweepAxis::quantizer, four, false));
    for (std::size_t i = 0; i < vals.size(); ++i) {
        CHECK(one[i].index == i);
        CHECK(one[i].value == vals[i]);
    }
    CHECK(one[0].loss == one[3].loss);
}

TEST_CASE("a failing row is recorded and the sweep continues") {
    const auto in = input(7, 128);
    const auto rows =
        lopro::run_ablation_sweep(SweepAxis::rank, std::vector<std::string>{"4", "500", "x", "8"}, base_config(), in);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].ok);
    CHECK_FALSE(rows[1].ok);
    CHECK(rows[1].error.find("--rank") != std::string::npos);
    CHECK_FALSE(rows[2].ok);
    CHECK(rows[3].ok);
    const auto table = lopro::format_sweep_table(SweepAxis::rank, rows);
    CHECK(table.find("500") != std::string::npos);
    CHECK_THROWS_AS(lopro::run_ablation_sweep(SweepAxis::rank, std::vector<std::string>{}, base_config(), in),
                    std::invalid_argument);
}

TEST_CASE("axis values") {
    const PipelineConfig b = base_config();
    CHECK(lopro::apply_axis_value(b, SweepAxis::block_size, "128").identity_block == 128);
    const auto split = lopro::apply_axis_value(b, SweepAxis::block_size, "16:32");
    CHECK(split.identity_block == 16);
    CHECK(split.hadamard_block == 32);
    CHECK(lopro::apply_axis_value(b, SweepAxis::iterations, "3").iterations == 3);
    CHECK(lopro::apply_axis_value(b, SweepAxis::quantizer, "rtn").quantizer == lopro::QuantizerKind::rtn);
    CHECK_THROWS_AS(lopro::apply_axis_value(b, SweepAxis::rank, "-2"), std::invalid_argument);
    CHECK(lopro::parse_sweep_axis("block_size") == SweepAxis::block_size);
    CHECK_THROWS_AS(lopro::parse_sweep_axis("bits"), std::invalid_argument);
}

TEST_CASE("worker count honours LOPRO_THREADS") {
    ::setenv("LOPRO_THREADS", "3", 1);
    CHECK(lopro::sweep_worker_count(10) == 3);
    CHECK(lopro::sweep_worker_count(2) == 2);
    ::setenv("LOPRO_THREADS", "0", 1);
    CHECK(lopro::sweep_worker_count(10) >= 1);
    ::unsetenv("LOPRO_THREADS");
    CHECK(lopro::sweep_worker_count(0) == 1);
}

TEST_CASE("jsonl carries timings only when asked") {
    const auto in = input(8, 64);
    PipelineConfig c = base_config();
    c.identity_block = 32;
    c.hadamard_block = 32;
    c.group_size = 32;
    const auto rows = lopro::run_ablation_sweep(SweepAxis::rank, std::vector<std::string>{"4"}, c, in);
    CHECK(lopro::format_sweep_jsonl(SweepAxis::rank, rows, true).find("decompose") != std::string::npos);
    CHECK(lopro::format_sweep_jsonl(SweepAxis::rank, rows, false).find("decompose") == std::string::npos);
}
