#include "doctest.h"
#include "unit/oracles.hpp"

#include "lopro/quantizers.hpp"
#include "lopro/rotation_plan.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

using lopro::Matrix;
using lopro::PermutationIndex;

namespace {

// residual whose column j has mean |x| = amean[j]
Matrix with_column_means(const std::vector<double>& amean, std::size_t rows = 3) {
    Matrix r(rows, amean.size());
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < amean.size(); ++j) {
            r(i, j) = (i % 2 == 0 ? 1.0 : -1.0) * amean[j];
        }
    }
    return r;
}

} // namespace

TEST_CASE("permutation examples") {
    const auto p = lopro::build_permutation(std::vector<double>{4, 1, 9}, with_column_means({2, 1, 3}));
    CHECK(p.indices() == std::vector<std::uint32_t>{2, 0, 1});
    const auto sorted = lopro::build_permutation(std::vector<double>{9, 4, 1}, with_column_means({1, 1, 1}));
    CHECK(sorted.is_identity());
    const auto ties = lopro::build_permutation(std::vector<double>{2, 4, 6, 8}, with_column_means({1, 2, 3, 4}));
    CHECK(ties.is_identity());
}

TEST_CASE("permutation order ignores a uniform residual scale") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Matrix r = oracle::gaussian(5, 16, seed);
        auto h = lopro::GaussianSource(seed + 99).normal_vector(16);
        for (double& x : h) {
            x = x * x;
        }
        const auto base = lopro::build_permutation(h, r);
        for (double c : {1e-3, 0.5, 7.0, 1e4}) {
            CHECK(lopro::build_permutation(h, c * r) == base);
        }
    }
}

TEST_CASE("zero residual columns are clamped, not divided by zero") {
    Matrix r(2, 3);
    r(0, 1) = 1.0;
    const auto p = lopro::build_permutation(std::vector<double>{1, 1, 1}, r);
    CHECK(p.size() == 3);
    CHECK(p[2] == 1);
}

TEST_CASE("make_plan geometry") {
    const auto plan = lopro::make_plan(4096, PermutationIndex::identity(4096), 256, 256);
    CHECK(plan.hadamard_block_count() == 15);
    CHECK(lopro::make_plan(64, PermutationIndex::identity(64), 64, 16).hadamard_block_count() == 0);
    CHECK_THROWS_AS(lopro::make_plan(8, PermutationIndex::identity(8), 0, 6), std::invalid_argument);
    CHECK_THROWS_AS(lopro::make_plan(8, PermutationIndex::identity(8), 9, 1), std::invalid_argument);
    CHECK_THROWS_AS(lopro::make_plan(8, PermutationIndex::identity(7), 0, 8), std::invalid_argument);
    try {
        (void)lopro::make_plan(300, PermutationIndex::identity(300), 256, 64);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("236") != std::string::npos);
        CHECK(msg.find("300") != std::string::npos);
    }
}

TEST_CASE("rotate_hessian examples") {
    const Matrix h = oracle::random_spd(8, 1);
    CHECK(lopro::rotate_hessian(h, lopro::RotationPlan::identity(8)) == h);
    const auto plan = lopro::make_plan(8, oracle::random_permutation(8, 2), 0, 8);
    const Matrix id = lopro::rotate_hessian(Matrix::identity(8), plan);
    CHECK(lopro::frobenius_norm(id - Matrix::identity(8)) < 1e-12);
    const auto a = oracle::sorted_eigenvalues(oracle::to_eigen(h));
    const auto b = oracle::sorted_eigenvalues(oracle::to_eigen(lopro::rotate_hessian(h, plan)));
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(std::abs(a[i] - b[i]) <= 1e-8 * a.back());
    }
    Matrix asym = h;
    asym(0, 1) += 1.0;
    CHECK_THROWS_AS(lopro::rotate_hessian(asym, plan), std::invalid_argument);
}

TEST_CASE("rotate_hessian equals the dense conjugation and keeps invariants") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix h = oracle::random_spd(32, seed);
        const auto plan = lopro::make_plan(32, oracle::random_permutation(32, seed), 8 * (seed % 3), 8);
        const oracle::Dense pq = oracle::permutation(plan.permutation()) * oracle::block_q(plan);
        const oracle::Dense want = pq.transpose() * oracle::to_eigen(h) * pq;
        const Matrix got = lopro::rotate_hessian(h, plan);
        CHECK(oracle::rel(oracle::to_eigen(got), want) < 1e-12);
        CHECK(lopro::frobenius_norm(got - lopro::transpose(got)) <= 1e-10 * lopro::frobenius_norm(got));
        CHECK(std::abs(lopro::trace(got) - lopro::trace(h)) <= 1e-8 * lopro::trace(h));
        CHECK(std::abs(lopro::frobenius_norm(got) - lopro::frobenius_norm(h)) <= 1e-8 * lopro::frobenius_norm(h));
    }
}

TEST_CASE("loss in the rotated frame equals the loss in the original frame") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const Matrix h = oracle::random_spd(16, seed);
        const auto plan = lopro::make_plan(16, oracle::random_permutation(16, seed + 50), 4 * (seed % 2), 4);
        const Matrix e_rot = oracle::gaussian(6, 16, seed + 7);
        const Matrix zero(6, 16);
        const double rotated = lopro::proxy_loss(e_rot, zero, lopro::rotate_hessian(h, plan));
        const double original = lopro::proxy_loss(lopro::apply_block_rotation(e_rot, plan, true), zero, h);
        CHECK(std::abs(rotated - original) <= 1e-9 * original);
    }
}
