#include "doctest.h"
#include "unit/oracles.hpp"

#include "lopro/jacobi_svd.hpp"

#include <cmath>
#include <stdexcept>

using lopro::Matrix;

namespace {

double reconstruction_error(const Matrix& a, const lopro::SvdResult& r) {
    const auto u = oracle::to_eigen(r.u);
    const auto v = oracle::to_eigen(r.v);
    const Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(r.s.data(), static_cast<Eigen::Index>(r.s.size()));
    return oracle::rel(u * s.asDiagonal() * v.transpose(), oracle::to_eigen(a));
}

} // namespace

TEST_CASE("diagonal and zero inputs") {
    const auto d = lopro::exact_svd_small(Matrix::from_rows({{3, 0}, {0, 1}}));
    CHECK(d.s[0] == doctest::Approx(3.0));
    CHECK(d.s[1] == doctest::Approx(1.0));
    const auto z = lopro::exact_svd_small(Matrix(4, 3));
    for (double s : z.s) {
        CHECK(s == 0.0);
    }
}

TEST_CASE("singular values match an independent eigensolver on A^T A") {
    const Matrix a = oracle::gaussian(8, 5, 7);
    const auto r = lopro::exact_svd_small(a);
    const auto ea = oracle::to_eigen(a);
    auto ev = oracle::sorted_eigenvalues(ea.transpose() * ea);
    REQUIRE(r.s.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(std::abs(r.s[i] - std::sqrt(std::max(0.0, ev[4 - i]))) < 1e-8);
    }
}

TEST_CASE("orthonormal factors and reconstruction up to 64x64") {
    for (std::size_t m : {1U, 5U, 17U, 40U, 64U}) {
        for (std::size_t n : {1U, 9U, 64U}) {
            const Matrix a = oracle::gaussian(m, n, m * 100 + n);
            const auto r = lopro::exact_svd_small(a);
            const std::size_t k = std::min(m, n);
            CHECK(r.u.rows() == m);
            CHECK(r.u.cols() == k);
            CHECK(r.v.rows() == n);
            CHECK(r.v.cols() == k);
            const auto u = oracle::to_eigen(r.u);
            const auto v = oracle::to_eigen(r.v);
            CHECK((u.transpose() * u - oracle::Dense::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)))
                      .norm() < 1e-10);
            CHECK((v.transpose() * v - oracle::Dense::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)))
                      .norm() < 1e-10);
            CHECK(reconstruction_error(a, r) <= 1e-9);
            for (std::size_t i = 1; i < k; ++i) {
                CHECK(r.s[i - 1] >= r.s[i]);
            }
            CHECK(r.s.back() >= 0.0);
        }
    }
}

TEST_CASE("rank-deficient input keeps orthonormal factors") {
    const Matrix a = lopro::matmul(oracle::gaussian(10, 2, 1), oracle::gaussian(2, 6, 2));
    const auto r = lopro::exact_svd_small(a);
    CHECK(reconstruction_error(a, r) < 1e-12);
    CHECK(r.s[2] < 1e-12 * r.s[0]);
}

TEST_CASE("truncated error and size guard") {
    const std::vector<double> s{4.0, 3.0, 0.0};
    CHECK(lopro::truncated_svd_error(s, 1) == doctest::Approx(3.0));
    CHECK(lopro::truncated_svd_error(s, 0) == doctest::Approx(5.0));
    CHECK(lopro::truncated_svd_error(s, 3) == 0.0);
    CHECK_THROWS_AS(lopro::exact_svd_small(Matrix(300, 257)), std::invalid_argument);
    CHECK_NOTHROW(lopro::exact_svd_small(Matrix(300, 2)));
}
