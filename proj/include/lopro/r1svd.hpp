#pragma once

#include "lopro/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace lopro {

enum class FactorPrecision { full, e4m3 };

std::string_view to_string(FactorPrecision p) noexcept;
FactorPrecision parse_factor_precision(std::string_view s);

/// Rank-r factors U diag(S) V.
///
/// `v` holds rows in the frame the decomposition ran in. For activation-scaled
/// decompositions that is the scaled frame; `unscaled_v` folds diag(s)^-1 back in.
/// With e4m3 precision every entry of `u` and `v` is exactly e4m3-representable.
struct LowRankFactors {
    Matrix u;              ///< m x r, unit columns (to e4m3 resolution in e4m3 mode)
    std::vector<double> s; ///< r singular values, non-negative
    Matrix v;              ///< r x n, unit rows
    FactorPrecision precision = FactorPrecision::full;

    [[nodiscard]] std::size_t rank() const noexcept { return s.size(); }

    bool operator==(const LowRankFactors&) const = default;
};

struct RankOneComponent {
    std::vector<double> u;
    double sigma = 0.0;
    std::vector<double> v;
};

/// One rank-1 randomized sketch: y = (A A^T)^it A g for a Gaussian g drawn
/// from `seed`, u = y/|y|, b = A^T u, sigma = |b|, v = b/|b|.
///
/// The power iterate is renormalized between Gram applications; only its
/// direction is used, and this keeps large `it` from overflowing.
/// If the sketch lands in the null space it is redrawn from seed+1, seed+2, ...
/// (8 redraws) before failing with std::runtime_error. A zero matrix yields
/// sigma = 0 with u = e_0, v = e_0.
RankOneComponent r1svd_step(const Matrix& a, unsigned iterations, std::uint64_t seed);

/// Rank-1 deflation: r sketches, each rounded to `precision` before being
/// subtracted, so rounding error lands in the matrix the next sketch sees.
/// In e4m3 mode some entries of u and v may take the other grid value
/// bracketing them instead of the nearest one, which keeps the stored norms
/// near 1. When that is not enough the vector is scaled by some c within 1/8
/// of 1 before rounding and sigma is divided by c.
/// Step k uses seed + k.
LowRankFactors r1svd_decompose(const Matrix& a, std::size_t rank, unsigned iterations, FactorPrecision precision,
                               std::uint64_t seed);

/// V diag(scale)^-1.
Matrix unscaled_v(const LowRankFactors& f, std::span<const double> scale);

/// U diag(S) V, or U diag(S) V diag(scale)^-1 when `scale` is non-empty.
Matrix low_rank_product(const LowRankFactors& f, std::span<const double> scale = {});

struct ScaledDecomposition {
    LowRankFactors factors; ///< as stored: V in the scaled frame, S rounded to binary32
    Matrix residual;        ///< W - U diag(S) V diag(s)^-1, computed from the stored factors
};

/// Decomposes W diag(scale) and returns the exact complement in the original frame.
ScaledDecomposition scaled_decompose(const Matrix& w, std::span<const double> scale, std::size_t rank,
                                     unsigned iterations, FactorPrecision precision, std::uint64_t seed);

} // namespace lopro
