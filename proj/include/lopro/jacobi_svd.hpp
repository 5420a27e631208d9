#pragma once

#include "lopro/matrix.hpp"

#include <cstddef>
#include <vector>

namespace lopro {

inline constexpr std::size_t kExactSvdMaxDim = 256;

/// Thin SVD: A = U diag(S) V^T with U m x k, V n x k, k = min(m, n).
struct SvdResult {
    Matrix u;
    std::vector<double> s; ///< non-negative, descending
    Matrix v;
};

/// One-sided (Hestenes) Jacobi SVD, iterated until no pair needs rotating.
/// Intended as a reference for small matrices only: min(m, n) above
/// kExactSvdMaxDim is rejected.
SvdResult exact_svd_small(const Matrix& a);

/// ||A - A_k||_F for the optimal rank-k truncation (from the singular values).
double truncated_svd_error(const std::vector<double>& singular_values, std::size_t k);

} // namespace lopro
