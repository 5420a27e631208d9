#include "lopro/rotation_plan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lopro {

PermutationIndex build_permutation(std::span<const double> hessian_diag, const Matrix& residual, double eps) {
    const std::size_t n = hessian_diag.size();
    if (residual.cols() != n) {
        throw std::invalid_argument("build_permutation: residual has " + std::to_string(residual.cols()) +
                                    " columns, Hessian diagonal has " + std::to_string(n));
    }
    std::vector<double> amean(n, 0.0);
    for (std::size_t i = 0; i < residual.rows(); ++i) {
        const auto row = residual.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            amean[j] += std::abs(row[j]);
        }
    }
    std::vector<double> metric(n);
    const double rows = static_cast<double>(std::max<std::size_t>(residual.rows(), 1));
    for (std::size_t j = 0; j < n; ++j) {
        if (hessian_diag[j] < 0.0) {
            throw std::invalid_argument("build_permutation: negative Hessian diagonal at column " + std::to_string(j));
        }
        metric[j] = hessian_diag[j] / std::max(amean[j] / rows, eps);
    }
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0U);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return metric[a] > metric[b]; });
    return PermutationIndex(std::move(order));
}

RotationPlan make_plan(std::size_t n, PermutationIndex indices, std::size_t identity_block, std::size_t hadamard_block) {
    if (indices.size() != n) {
        throw std::invalid_argument("make_plan: permutation has " + std::to_string(indices.size()) +
                                    " entries, expected n = " + std::to_string(n));
    }
    if (!is_power_of_two(hadamard_block)) {
        throw std::invalid_argument("make_plan: b_H = " + std::to_string(hadamard_block) +
                                    " must be a power of two");
    }
    if (identity_block > n) {
        throw std::invalid_argument("make_plan: b_I = " + std::to_string(identity_block) + " exceeds n = " +
                                    std::to_string(n));
    }
    const std::size_t rem = (n - identity_block) % hadamard_block;
    if (rem != 0) {
        const std::size_t up = identity_block + rem;
        std::string msg = "make_plan: n - b_I = " + std::to_string(n - identity_block) + " is not divisible by b_H = " +
                          std::to_string(hadamard_block) + "; nearest valid b_I: ";
        if (identity_block >= hadamard_block - rem) {
            msg += std::to_string(identity_block - (hadamard_block - rem)) + " or ";
        }
        msg += std::to_string(up);
        throw std::invalid_argument(msg);
    }
    return RotationPlan(std::move(indices), identity_block, hadamard_block);
}

Matrix rotate_hessian(const Matrix& h, const RotationPlan& plan) {
    if (h.rows() != h.cols() || h.rows() != plan.n()) {
        throw std::invalid_argument("rotate_hessian: expected a " + std::to_string(plan.n()) + "x" +
                                    std::to_string(plan.n()) + " Hessian");
    }
    const double scale = frobenius_norm(h);
    if (scale > 0.0 && frobenius_norm(h - transpose(h)) > 1e-10 * scale) {
        throw std::invalid_argument("rotate_hessian: Hessian is not symmetric");
    }
    // (H P Q)^T P Q = Q^T P^T H P Q for symmetric H.
    const Matrix right = apply_block_rotation(h, plan, false);
    return apply_block_rotation(transpose(right), plan, false);
}

} // namespace lopro
