#pragma once

#include "lopro/matrix.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace lopro {

[[nodiscard]] constexpr bool is_power_of_two(std::size_t x) noexcept { return x != 0 && (x & (x - 1)) == 0; }

/// In-place normalized Walsh-Hadamard transform (Sylvester ordering).
/// Each butterfly stage carries its own 1/sqrt(2), so no rescale pass is needed.
void fwht_inplace(std::span<double> v);

/// Returns H_{2^k} v. Throws std::invalid_argument when the length is not a power of two.
std::vector<double> fwht_normalized(std::span<const double> v);

/// Column permutation P followed by the block-diagonal rotation
/// Q = diag(I_{b_I}, H_{b_H}, ..., H_{b_H}). P and Q are never materialized.
class RotationPlan {
public:
    RotationPlan() = default;
    /// Validates the geometry; see make_plan for the variant that suggests a fix.
    RotationPlan(PermutationIndex indices, std::size_t identity_block, std::size_t hadamard_block);

    static RotationPlan identity(std::size_t n);

    [[nodiscard]] std::size_t n() const noexcept { return indices_.size(); }
    [[nodiscard]] const PermutationIndex& permutation() const noexcept { return indices_; }
    [[nodiscard]] std::size_t identity_block() const noexcept { return identity_block_; }
    [[nodiscard]] std::size_t hadamard_block() const noexcept { return hadamard_block_; }
    [[nodiscard]] std::size_t hadamard_block_count() const noexcept {
        return hadamard_block_ == 0 ? 0 : (n() - identity_block_) / hadamard_block_;
    }

    bool operator==(const RotationPlan&) const = default;

private:
    PermutationIndex indices_;
    std::size_t identity_block_ = 0;
    std::size_t hadamard_block_ = 1;
};

/// inverse == false: M P Q.  inverse == true: M Q^T P^T.
Matrix apply_block_rotation(const Matrix& m, const RotationPlan& plan, bool inverse = false);

/// Q^T P^T X for X with plan.n() rows; the input-side transform used at inference.
Matrix rotate_input(const Matrix& x, const RotationPlan& plan);

} // namespace lopro
