#include "doctest.h"
#include "unit/oracles.hpp"

#include "lopro/numeric_formats.hpp"
#include "lopro/quantizers.hpp"

#include <array>

#include <cmath>
#include <set>
#include <stdexcept>

using lopro::Matrix;
using lopro::QuantGrid;

namespace {

QuantGrid grid(unsigned bits, std::size_t g, bool symmetric = true) {
    QuantGrid q;
    q.bits = bits;
    q.group_size = g;
    q.symmetric = symmetric;
    return q;
}

double rtn_loss(const Matrix& r, const Matrix& h, const QuantGrid& g) {
    return lopro::proxy_loss(r, lopro::rtn_quantize(r, g).dequantized, h);
}

} // namespace

TEST_CASE("rtn examples") {
    const auto z = lopro::rtn_quantize(Matrix(3, 8), grid(2, 4));
    CHECK(z.dequantized == Matrix(3, 8));
    for (double s : z.grid.scales) {
        CHECK(s == 1.0);
    }
    for (auto c : z.codes) {
        CHECK(c == z.grid.symmetric_offset());
    }

    const auto q = lopro::rtn_quantize(Matrix::from_rows({{-3, 0, 3}}), grid(2, 3));
    CHECK(q.grid.scales[0] == 3.0);
    CHECK(q.dequantized == Matrix::from_rows({{-3, 0, 3}}));
}

TEST_CASE("dequantize of rtn is a fixed point") {
    for (unsigned bits : {2U, 3U, 4U, 8U}) {
        for (bool sym : {true, false}) {
            const Matrix m = oracle::gaussian(6, 32, bits * 10 + sym);
            const auto a = lopro::rtn_quantize(m, grid(bits, 8, sym));
            const auto b = lopro::rtn_quantize(a.dequantized, grid(bits, 8, sym));
            CHECK(b.codes == a.codes);
            CHECK(b.grid == a.grid);
            CHECK(b.dequantized == a.dequantized);
            CHECK(lopro::dequantize(a.codes, a.grid, 6, 32) == a.dequantized);
            for (auto c : a.codes) {
                CHECK(c <= a.grid.max_code());
            }
        }
    }
}

TEST_CASE("symmetric codes stay inside the symmetric range") {
    const auto q = lopro::rtn_quantize(oracle::gaussian(4, 16, 3), grid(3, 16));
    for (auto c : q.codes) {
        CHECK(c >= 1);
        CHECK(c <= 7);
    }
    for (double s : q.grid.scales) {
        CHECK(lopro::half_round(s) == s);
    }
}

TEST_CASE("grid validation") {
    CHECK_THROWS_AS(lopro::rtn_quantize(Matrix(2, 6), grid(2, 4)), std::invalid_argument);
    CHECK_THROWS_AS(lopro::rtn_quantize(Matrix(2, 8), grid(5, 4)), std::invalid_argument);
    CHECK_THROWS_AS(lopro::rtn_quantize(Matrix(2, 8), grid(2, 0)), std::invalid_argument);
}

TEST_CASE("asymmetric grid covers the group range") {
    const Matrix m = Matrix::from_rows({{1, 2, 3, 4}});
    const auto q = lopro::rtn_quantize(m, grid(2, 4, false));
    CHECK(q.grid.zeros.size() == 1);
    CHECK(lopro::relative_error(q.dequantized, m) < 0.2);
}

TEST_CASE("gptq with identity Hessian is rtn") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix r = oracle::gaussian(5, 16, seed);
        const auto a = lopro::gptq_quantize(r, Matrix::identity(16), grid(2, 4), 0.0);
        const auto b = lopro::rtn_quantize(r, grid(2, 4));
        CHECK(a.codes == b.codes);
        CHECK(a.grid == b.grid);
        CHECK(a.dequantized == b.dequantized);
    }
}

TEST_CASE("gptq with diagonal Hessian is bitwise rtn") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Matrix r = oracle::gaussian(4, 16, seed + 100);
        std::vector<double> d(16);
        lopro::GaussianSource g(seed);
        for (double& x : d) {
            x = 0.1 + std::abs(g.normal());
        }
        for (bool sym : {true, false}) {
            const auto a = lopro::gptq_quantize(r, Matrix::diagonal(d), grid(3, 8, sym));
            const auto b = lopro::rtn_quantize(r, grid(3, 8, sym));
            CHECK(a.codes == b.codes);
            CHECK(a.dequantized == b.dequantized);
        }
    }
}

TEST_CASE("gptq on representable weights is lossless") {
    const auto base = lopro::rtn_quantize(oracle::gaussian(4, 16, 1), grid(2, 8));
    const auto q = lopro::gptq_quantize(base.dequantized, oracle::random_spd(16, 2), grid(2, 8));
    CHECK(q.dequantized == base.dequantized);
    CHECK(lopro::proxy_loss(base.dequantized, q.dequantized, oracle::random_spd(16, 2)) == 0.0);
}

TEST_CASE("gptq beats rtn on random SPD Hessians") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Matrix r = oracle::gaussian(8, 8, 1000 + seed);
        const Matrix h = oracle::random_spd(8, 2000 + seed);
        const double g = lopro::proxy_loss(r, lopro::gptq_quantize(r, h, grid(2, 8)).dequantized, h);
        wins += g <= rtn_loss(r, h, grid(2, 8)) ? 1 : 0;
    }
    CHECK(wins >= 95);
}

TEST_CASE("damping retries on singular Hessians") {
    Matrix h(4, 4, 1.0); // rank one
    const auto c = lopro::damped_inverse_cholesky(h, 0.0);
    CHECK(c.damp_used > 0.0);
    const auto q = lopro::gptq_quantize(oracle::gaussian(2, 4, 3), h, grid(2, 4), 0.0);
    CHECK(q.damp_used > 0.0);
    Matrix dead = Matrix::identity(4);
    dead(2, 2) = 0.0;
    CHECK_NOTHROW(lopro::gptq_quantize(oracle::gaussian(2, 4, 4), dead, grid(2, 4)));
    Matrix neg = -1.0 * Matrix::identity(4);
    CHECK_THROWS_AS(lopro::damped_inverse_cholesky(neg, 0.01), std::runtime_error);
}

TEST_CASE("inverse Cholesky factor matches Eigen") {
    const Matrix h = oracle::random_spd(12, 5);
    const auto c = lopro::damped_inverse_cholesky(h, 0.01);
    oracle::Dense hd = oracle::to_eigen(h);
    hd.diagonal().array() += 0.01 * hd.diagonal().mean();
    const oracle::Dense u = oracle::to_eigen(c.upper);
    CHECK(oracle::rel(u.transpose() * u, hd.inverse()) < 1e-10);
    CHECK(u.triangularView<Eigen::StrictlyLower>().toDenseMatrix().norm() == 0.0);
}

TEST_CASE("proxy loss") {
    const Matrix w = oracle::gaussian(5, 6, 1);
    CHECK(lopro::proxy_loss(w, w, oracle::random_spd(6, 1)) == 0.0);
    const Matrix e = oracle::gaussian(5, 6, 2);
    CHECK(lopro::proxy_loss(w, w + e, Matrix::identity(6)) ==
          doctest::Approx(std::pow(lopro::frobenius_norm(e), 2)).epsilon(1e-13));
    const Matrix x = oracle::gaussian(6, 64, 3);
    const Matrix what = oracle::gaussian(5, 6, 4);
    const Matrix h = (1.0 / 64.0) * lopro::matmul(x, lopro::transpose(x));
    const double direct = std::pow(lopro::frobenius_norm(lopro::matmul(w - what, x)), 2) / 64.0;
    CHECK(std::abs(lopro::proxy_loss(w, what, h) - direct) <= 1e-8 * direct);
    CHECK_THROWS_AS(lopro::proxy_loss(w, Matrix(5, 5), h), std::invalid_argument);
}

TEST_CASE("vq codebook shape and determinism") {
    const Matrix r = oracle::gaussian(16, 16, 7);
    const Matrix h = oracle::random_spd(16, 7);
    lopro::VqOptions o;
    o.bits = 2;
    o.dim = 2;
    o.seed = 3;
    const auto a = lopro::vq_quantize(r, h, o);
    CHECK(a.codebook.size() == 16);
    CHECK(a.indices.size() == 16 * 8);
    for (double x : a.codebook.entries) {
        CHECK(std::isfinite(x));
        CHECK(static_cast<double>(static_cast<float>(x)) == x);
    }
    const auto b = lopro::vq_quantize(r, h, o);
    CHECK(a.indices == b.indices);
    CHECK(a.codebook == b.codebook);
    CHECK(lopro::dequantize(a.indices, a.codebook, 16, 16) == a.dequantized);
    o.dim = 3;
    CHECK_THROWS_AS(lopro::vq_quantize(r, h, o), std::invalid_argument);
    o.dim = 8;
    o.bits = 3;
    CHECK_THROWS_AS(lopro::vq_quantize(r, h, o), std::invalid_argument);
}

TEST_CASE("vq reproduces weights made of codebook entries") {
    // every 2-block is one of four patterns; 1 bit x 2 dims gives a 4-entry codebook
    const std::vector<std::array<double, 2>> pats{{{1, 2}}, {{-1, 0.5}}, {{0, 0}}, {{3, -3}}};
    Matrix r(32, 8);
    for (std::size_t i = 0; i < 32; ++i) {
        for (std::size_t b = 0; b < 4; ++b) {
            const auto& p = pats[(i + b * 3) % 4];
            r(i, 2 * b) = p[0];
            r(i, 2 * b + 1) = p[1];
        }
    }
    int covered = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        lopro::VqOptions o;
        o.bits = 1;
        o.dim = 2;
        o.seed = seed;
        const auto q = lopro::vq_quantize(r, oracle::random_spd(8, seed), o);
        std::set<std::pair<double, double>> entries;
        for (std::size_t k = 0; k < q.codebook.size(); ++k) {
            entries.insert({q.codebook.entry(k)[0], q.codebook.entry(k)[1]});
        }
        if (entries.size() == 4) {
            ++covered;
            CHECK(q.dequantized == r);
        }
    }
    CHECK(covered > 0);

    Matrix same(8, 8);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            same(i, j) = j % 2 == 0 ? 0.75 : -1.5;
        }
    }
    lopro::VqOptions o;
    o.bits = 2;
    o.dim = 2;
    o.lloyd_iters = 3;
    CHECK(lopro::vq_quantize(same, oracle::random_spd(8, 1), o).dequantized == same);
}

TEST_CASE("asymmetric requantization is a fixed point across many groups") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const Matrix m = oracle::gaussian(2, 16, 7000 + seed, 1.0 + static_cast<double>(seed % 9));
        for (unsigned bits : {2U, 3U, 4U}) {
            const auto a = lopro::rtn_quantize(m, grid(bits, 4, false));
            const auto b = lopro::rtn_quantize(a.dequantized, grid(bits, 4, false));
            CHECK(b.codes == a.codes);
            CHECK(b.dequantized == a.dequantized);
        }
    }
}

TEST_CASE("vq with dim 1 is a nearest-level scalar quantizer over the codebook") {
    const Matrix r = oracle::gaussian(8, 8, 9);
    lopro::VqOptions o;
    o.bits = 2;
    o.dim = 1;
    const auto q = lopro::vq_quantize(r, Matrix::identity(8), o);
    CHECK(q.codebook.size() == 4);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            double best = 1e300;
            for (double c : q.codebook.entries) {
                best = std::min(best, std::abs(c - r(i, j)));
            }
            CHECK(std::abs(q.dequantized(i, j) - r(i, j)) == best);
        }
    }
}

TEST_CASE("Lloyd refinement lowers vq loss") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Matrix r = oracle::gaussian(16, 16, 300 + seed);
        const Matrix h = oracle::random_spd(16, 400 + seed);
        lopro::VqOptions o;
        o.bits = 2;
        o.dim = 4;
        o.seed = seed;
        o.lloyd_iters = 0;
        const double plain = lopro::proxy_loss(r, lopro::vq_quantize(r, h, o).dequantized, h);
        o.lloyd_iters = 10;
        const double refined = lopro::proxy_loss(r, lopro::vq_quantize(r, h, o).dequantized, h);
        wins += refined <= plain ? 1 : 0;
    }
    CHECK(wins >= 45);
}

TEST_CASE("quantizer names") {
    CHECK(lopro::parse_quantizer_kind("vq") == lopro::QuantizerKind::vq);
    CHECK(lopro::to_string(lopro::QuantizerKind::gptq) == "gptq");
    CHECK_THROWS_AS(lopro::parse_quantizer_kind("awq"), std::invalid_argument);
}
