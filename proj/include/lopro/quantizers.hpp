#pragma once

#include "lopro/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace lopro {

enum class QuantizerKind { rtn, gptq, vq };

std::string_view to_string(QuantizerKind k) noexcept;
QuantizerKind parse_quantizer_kind(std::string_view s);

inline constexpr double kDefaultDamp = 0.01;

/// Per-group integer grid along the input (column) dimension.
///
/// Symmetric mode: levels q in [-(2^(b-1)-1), 2^(b-1)-1], stored code = q + 2^(b-1),
/// scale = max|x| / (2^(b-1)-1) rounded to binary16.
/// Asymmetric mode: code in [0, 2^b-1], value = (code - zero) * scale.
/// An all-zero group gets scale 1 and level 0.
struct QuantGrid {
    unsigned bits = 2;
    std::size_t group_size = 128;
    bool symmetric = true;
    std::vector<double> scales;      ///< rows * (cols / group_size), row-major, binary16-representable
    std::vector<std::int32_t> zeros; ///< asymmetric mode only, same layout as scales

    [[nodiscard]] std::uint32_t max_code() const noexcept { return (1U << bits) - 1U; }
    [[nodiscard]] std::int32_t symmetric_offset() const noexcept { return 1 << (bits - 1); }

    bool operator==(const QuantGrid&) const = default;
};

/// Checks bits in {2,3,4,8} and group_size > 0 dividing cols.
void validate_grid(const QuantGrid& grid, std::size_t cols);

struct ScalarQuantized {
    std::vector<std::uint8_t> codes; ///< rows * cols, row-major
    QuantGrid grid;
    Matrix dequantized;
    double damp_used = 0.0; ///< damping after Cholesky retries (gptq only)
};

Matrix dequantize(std::span<const std::uint8_t> codes, const QuantGrid& grid, std::size_t rows, std::size_t cols);

/// Round-to-nearest on the grid; dequantize(rtn(M)) is a fixed point.
ScalarQuantized rtn_quantize(const Matrix& m, QuantGrid grid);

/// Column-sequential error-compensating quantizer on the loss tr(E H E^T).
///
/// Columns are processed in their given order. Group scales are fitted when
/// the first column of each group is reached, on the error-updated weights.
/// The damped Hessian is H + damp * mean(diag H) * I; zero diagonal entries
/// are set to 1 first. If Cholesky fails the damping is raised 10x, up to
/// three times, then std::runtime_error is thrown.
ScalarQuantized gptq_quantize(const Matrix& r, const Matrix& h, QuantGrid grid, double damp = kDefaultDamp);

/// tr((W_hat - W) H (W_hat - W)^T).
double proxy_loss(const Matrix& w, const Matrix& w_hat, const Matrix& h);

struct Codebook {
    std::size_t dim = 0;
    std::vector<double> entries; ///< size() * dim values, binary32-representable

    [[nodiscard]] std::size_t size() const noexcept { return dim == 0 ? 0 : entries.size() / dim; }
    [[nodiscard]] std::span<const double> entry(std::size_t k) const noexcept { return {entries.data() + k * dim, dim}; }

    bool operator==(const Codebook&) const = default;
};

struct VqOptions {
    unsigned bits = 2;
    std::size_t dim = 4;
    unsigned lloyd_iters = 0;
    std::uint64_t seed = 0;
    double damp = kDefaultDamp;
};

inline constexpr unsigned kMaxCodebookBits = 16;

struct VectorQuantized {
    std::vector<std::uint16_t> indices; ///< rows * (cols / dim), row-major
    Codebook codebook;
    Matrix dequantized;
    double damp_used = 0.0;
};

Matrix dequantize(std::span<const std::uint16_t> indices, const Codebook& codebook, std::size_t rows, std::size_t cols);

/// Codebook of 2^(bits*dim) entries sampled from the rows of R at seeded
/// positions, optionally refined by Lloyd iterations (plain Euclidean).
/// Blocks of `dim` columns are then assigned left to right under a
/// diag(H)-weighted distance, with error compensation as in gptq_quantize.
VectorQuantized vq_quantize(const Matrix& r, const Matrix& h, const VqOptions& options);

/// Upper Cholesky factor U of (H_damped)^-1 = U^T U, with the damping that succeeded.
struct InverseCholesky {
    Matrix upper;
    double damp_used = 0.0;
};
InverseCholesky damped_inverse_cholesky(const Matrix& h, double damp);

} // namespace lopro
