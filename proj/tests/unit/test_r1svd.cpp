#include "doctest.h"
#include "unit/oracles.hpp"

#include "lopro/jacobi_svd.hpp"
#include "lopro/numeric_formats.hpp"
#include "lopro/r1svd.hpp"

#include <cmath>
#include <stdexcept>

using lopro::FactorPrecision;
using lopro::Matrix;

namespace {

double residual_norm(const Matrix& a, const lopro::LowRankFactors& f) {
    return lopro::frobenius_norm(a - lopro::low_rank_product(f));
}

} // namespace

TEST_CASE("rank-one input is recovered exactly") {
    const std::vector<double> a{1.0, -2.0, 0.5};
    const std::vector<double> b{3.0, 0.0, 1.0, 2.0};
    Matrix m(3, 4);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            m(i, j) = a[i] * b[j];
        }
    }
    for (unsigned it : {0U, 1U, 8U}) {
        const auto c = lopro::r1svd_step(m, it, 42 + it);
        CHECK(c.sigma == doctest::Approx(lopro::norm2(a) * lopro::norm2(b)).epsilon(1e-12));
        const double su = lopro::dot(c.u, a) / lopro::norm2(a);
        const double sv = lopro::dot(c.v, b) / lopro::norm2(b);
        CHECK(std::abs(std::abs(su) - 1.0) < 1e-12);
        CHECK(std::abs(std::abs(sv) - 1.0) < 1e-12);
    }
}

TEST_CASE("identity input returns the normalized sketch") {
    const auto c = lopro::r1svd_step(Matrix::identity(2), 3, 7);
    CHECK(c.sigma == doctest::Approx(1.0));
    CHECK(std::abs(c.u[0] - c.v[0]) < 1e-15);
    CHECK(std::abs(c.u[1] - c.v[1]) < 1e-15);
    const auto g = lopro::GaussianSource(7).normal_vector(2);
    CHECK(std::abs(std::abs(lopro::dot(c.u, g)) / lopro::norm2(g) - 1.0) < 1e-12);
}

TEST_CASE("diag(3, 1) converges to the top singular pair") {
    const Matrix d = Matrix::from_rows({{3, 0}, {0, 1}});
    const auto c = lopro::r1svd_step(d, 8, 0);
    const auto exact = lopro::exact_svd_small(d);
    CHECK(std::abs(c.sigma - exact.s[0]) < 1e-6);
    CHECK(std::abs(c.u[0]) > 1.0 - 1e-6);
}

TEST_CASE("step invariants") {
    const Matrix a = oracle::gaussian(9, 7, 1);
    const auto c = lopro::r1svd_step(a, 2, 5);
    CHECK(std::abs(lopro::norm2(c.u) - 1.0) < 1e-12);
    CHECK(std::abs(lopro::norm2(c.v) - 1.0) < 1e-12);
    CHECK(c.sigma >= 0.0);
    CHECK(std::abs(c.sigma - lopro::norm2(lopro::matvec_transposed(a, c.u))) <= 1e-10);
    const auto z = lopro::r1svd_step(Matrix(3, 3), 4, 0);
    CHECK(z.sigma == 0.0);
    CHECK(lopro::norm2(z.u) == 1.0);
}

TEST_CASE("full rank recovers the matrix") {
    const Matrix a = oracle::gaussian(4, 4, 2);
    const auto f = lopro::r1svd_decompose(a, 4, 8, FactorPrecision::full, 3);
    CHECK(residual_norm(a, f) / lopro::frobenius_norm(a) <= 1e-4);
    const auto none = lopro::r1svd_decompose(a, 0, 8, FactorPrecision::full, 3);
    CHECK(none.rank() == 0);
    CHECK(lopro::low_rank_product(none) == Matrix(4, 4));
    CHECK_THROWS_AS(lopro::r1svd_decompose(a, 5, 8, FactorPrecision::full, 0), std::invalid_argument);
}

TEST_CASE("rank-16 residual is near the truncated SVD optimum") {
    const Matrix a = oracle::gaussian(64, 64, 4);
    const auto f = lopro::r1svd_decompose(a, 16, 8, FactorPrecision::full, 5);
    const double best = lopro::truncated_svd_error(lopro::exact_svd_small(a).s, 16);
    CHECK(residual_norm(a, f) <= 1.1 * best);
}

TEST_CASE("full precision residual is non-increasing in rank") {
    const Matrix a = oracle::gaussian(24, 20, 6);
    double prev = lopro::frobenius_norm(a);
    for (std::size_t r = 1; r <= 20; ++r) {
        const double cur = residual_norm(a, lopro::r1svd_decompose(a, r, 6, FactorPrecision::full, 9));
        CHECK(cur <= prev * (1.0 + 1e-12));
        prev = cur;
    }
}

TEST_CASE("e4m3 factors are representable and compensate rounding") {
    const Matrix a = oracle::gaussian(64, 64, 7);
    const auto q = lopro::r1svd_decompose(a, 16, 8, FactorPrecision::e4m3, 1);
    const auto f = lopro::r1svd_decompose(a, 16, 8, FactorPrecision::full, 1);
    CHECK(q.precision == FactorPrecision::e4m3);
    for (double x : q.u.values()) {
        CHECK(lopro::e4m3_round(x) == x);
    }
    for (double x : q.v.values()) {
        CHECK(lopro::e4m3_round(x) == x);
    }
    for (std::size_t k = 0; k < 16; ++k) {
        CHECK(std::abs(lopro::norm2(q.u.column(k)) - 1.0) < 1e-3);
        CHECK(std::abs(lopro::norm2(q.v.row(k)) - 1.0) < 1e-3);
        CHECK(std::abs(lopro::norm2(f.u.column(k)) - 1.0) < 1e-10);
        CHECK(std::abs(lopro::norm2(f.v.row(k)) - 1.0) < 1e-10);
    }
    CHECK(residual_norm(a, q) < 1.05 * residual_norm(a, f));
}

TEST_CASE("decomposition is deterministic") {
    const Matrix a = oracle::gaussian(20, 30, 8);
    CHECK(lopro::r1svd_decompose(a, 5, 8, FactorPrecision::e4m3, 3) ==
          lopro::r1svd_decompose(a, 5, 8, FactorPrecision::e4m3, 3));
}

TEST_CASE("scaled decomposition") {
    const Matrix w = oracle::gaussian(32, 32, 9);
    SUBCASE("unit scale matches the plain decomposition") {
        const std::vector<double> ones(32, 1.0);
        const auto d = lopro::scaled_decompose(w, ones, 6, 8, FactorPrecision::full, 2);
        const auto plain = lopro::r1svd_decompose(w, 6, 8, FactorPrecision::full, 2);
        CHECK(d.factors.u == plain.u);
        CHECK(d.factors.v == plain.v);
    }
    SUBCASE("rank 0 leaves W as the residual") {
        const std::vector<double> s(32, 2.0);
        const auto d = lopro::scaled_decompose(w, s, 0, 8, FactorPrecision::e4m3, 0);
        CHECK(d.residual == w);
    }
    SUBCASE("factors plus residual reconstruct W") {
        std::vector<double> s(32);
        for (std::size_t j = 0; j < 32; ++j) {
            s[j] = lopro::float_round(0.1 + 0.2 * static_cast<double>(j));
        }
        for (auto p : {FactorPrecision::full, FactorPrecision::e4m3}) {
            const auto d = lopro::scaled_decompose(w, s, 16, 8, p, 4);
            const Matrix back = lopro::low_rank_product(d.factors, s) + d.residual;
            CHECK(lopro::relative_error(back, w) <= 1e-12);
            const Matrix vprime = lopro::unscaled_v(d.factors, s);
            CHECK(vprime(0, 3) == doctest::Approx(d.factors.v(0, 3) / s[3]));
        }
    }
    CHECK_THROWS_AS(lopro::scaled_decompose(w, std::vector<double>(31, 1.0), 2, 8, FactorPrecision::full, 0),
                    std::invalid_argument);
}

TEST_CASE("precision names") {
    CHECK(lopro::parse_factor_precision("e4m3") == FactorPrecision::e4m3);
    CHECK(lopro::parse_factor_precision(lopro::to_string(FactorPrecision::full)) == FactorPrecision::full);
    CHECK_THROWS_AS(lopro::parse_factor_precision("fp8"), std::invalid_argument);
}

TEST_CASE("e4m3 factor norms stay within 1e-3 across shapes and seeds") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const std::size_t m = 16 + 8 * (seed % 7);
        const std::size_t n = 24 + 16 * (seed % 5);
        const Matrix a = oracle::gaussian(m, n, 500 + seed, 1.0 + static_cast<double>(seed));
        const auto f = lopro::r1svd_decompose(a, 8, 4, FactorPrecision::e4m3, seed);
        for (std::size_t k = 0; k < f.rank(); ++k) {
            CHECK(std::abs(lopro::norm2(f.u.column(k)) - 1.0) < 1e-3);
            CHECK(std::abs(lopro::norm2(f.v.row(k)) - 1.0) < 1e-3);
            CHECK(f.s[k] >= 0.0);
        }
    }
}
