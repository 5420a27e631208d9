#include "lopro/block_rotation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lopro {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

void rotate_row_blocks(std::span<double> row, std::size_t identity_block, std::size_t hadamard_block) {
    if (hadamard_block <= 1) {
        return;
    }
    for (std::size_t start = identity_block; start < row.size(); start += hadamard_block) {
        fwht_inplace(row.subspan(start, hadamard_block));
    }
}

} // namespace

void fwht_inplace(std::span<double> v) {
    const std::size_t n = v.size();
    if (!is_power_of_two(n)) {
        throw std::invalid_argument("fwht: length " + std::to_string(n) + " is not a power of two");
    }
    for (std::size_t h = 1; h < n; h <<= 1) {
        for (std::size_t base = 0; base < n; base += 2 * h) {
            for (std::size_t j = base; j < base + h; ++j) {
                const double a = v[j];
                const double b = v[j + h];
                v[j] = (a + b) * kInvSqrt2;
                v[j + h] = (a - b) * kInvSqrt2;
            }
        }
    }
}

std::vector<double> fwht_normalized(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    fwht_inplace(out);
    return out;
}

RotationPlan::RotationPlan(PermutationIndex indices, std::size_t identity_block, std::size_t hadamard_block)
    : indices_(std::move(indices)), identity_block_(identity_block), hadamard_block_(hadamard_block) {
    const std::size_t n = indices_.size();
    if (!is_power_of_two(hadamard_block_)) {
        throw std::invalid_argument("rotation plan: b_H = " + std::to_string(hadamard_block_) +
                                    " is not a power of two");
    }
    if (identity_block_ > n) {
        throw std::invalid_argument("rotation plan: b_I = " + std::to_string(identity_block_) + " exceeds n = " +
                                    std::to_string(n));
    }
    if ((n - identity_block_) % hadamard_block_ != 0) {
        throw std::invalid_argument("rotation plan: n - b_I = " + std::to_string(n - identity_block_) +
                                    " is not divisible by b_H = " + std::to_string(hadamard_block_));
    }
}

RotationPlan RotationPlan::identity(std::size_t n) { return RotationPlan(PermutationIndex::identity(n), n, 1); }

Matrix apply_block_rotation(const Matrix& m, const RotationPlan& plan, bool inverse) {
    if (m.cols() != plan.n()) {
        throw std::invalid_argument("apply_block_rotation: matrix has " + std::to_string(m.cols()) +
                                    " columns, plan expects " + std::to_string(plan.n()));
    }
    const auto& perm = plan.permutation();
    Matrix out(m.rows(), m.cols());
    std::vector<double> scratch(m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto src = m.row(i);
        auto dst = out.row(i);
        if (!inverse) {
            for (std::size_t j = 0; j < dst.size(); ++j) {
                dst[j] = src[perm[j]];
            }
            rotate_row_blocks(dst, plan.identity_block(), plan.hadamard_block());
        } else {
            // Hadamard blocks are symmetric, so Q^T applies the same butterflies.
            std::copy(src.begin(), src.end(), scratch.begin());
            rotate_row_blocks(scratch, plan.identity_block(), plan.hadamard_block());
            for (std::size_t j = 0; j < dst.size(); ++j) {
                dst[perm[j]] = scratch[j];
            }
        }
    }
    return out;
}

Matrix rotate_input(const Matrix& x, const RotationPlan& plan) {
    if (x.rows() != plan.n()) {
        throw std::invalid_argument("rotate_input: input has " + std::to_string(x.rows()) + " rows, plan expects " +
                                    std::to_string(plan.n()));
    }
    return transpose(apply_block_rotation(transpose(x), plan, false));
}

} // namespace lopro
