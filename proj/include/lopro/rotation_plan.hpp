#pragma once

#include "lopro/block_rotation.hpp"
#include "lopro/matrix.hpp"

#include <cstddef>
#include <span>

namespace lopro {

inline constexpr double kPermutationEps = 1e-12;

/// Importance order of residual columns: metric_j = h_j / max(amean_j, eps),
/// where amean_j is the mean |R_ij| down column j. Sorted descending with
/// ties kept in original order, so the most important columns lead.
PermutationIndex build_permutation(std::span<const double> hessian_diag, const Matrix& residual,
                                   double eps = kPermutationEps);

/// Validated plan. On an indivisible remainder the error message names the
/// nearest valid b_I values below and above the requested one.
RotationPlan make_plan(std::size_t n, PermutationIndex indices, std::size_t identity_block, std::size_t hadamard_block);

/// H' = Q^T P^T H P Q via gathers and block FWHTs. Rejects H that is not
/// symmetric to 1e-10 relative Frobenius.
Matrix rotate_hessian(const Matrix& h, const RotationPlan& plan);

} // namespace lopro
