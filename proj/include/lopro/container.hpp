#pragma once

#include "lopro/block_rotation.hpp"
#include "lopro/matrix.hpp"
#include "lopro/quantizers.hpp"
#include "lopro/r1svd.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lopro {

inline constexpr std::uint32_t kContainerVersion = 1;

/// Settings that do not change the stored tensors but are needed to reproduce them.
struct LayerMeta {
    double damp = kDefaultDamp;      ///< requested
    double damp_used = kDefaultDamp; ///< after Cholesky retries
    unsigned iterations = 8;
    std::uint64_t decompose_seed = 0;
    std::uint64_t vq_seed = 0;
    unsigned lloyd_iters = 0;
    double exponent = 2.5;
    unsigned original_bits = 16; ///< d_o in the bit accounting

    bool operator==(const LayerMeta&) const = default;
};

/// Everything needed to evaluate W_hat X = U diag(S) V' X + R_hat' Q^T P^T X.
///
/// Scalar mode fills `codes` and `grid`; VQ mode fills `indices` and
/// `codebook` (and uses grid.bits as bits per weight). Codes live in the
/// rotated, permuted frame. V is stored in the activation-scaled frame.
struct QuantizedLayer {
    std::string name = "layer";
    std::size_t rows = 0;
    std::size_t cols = 0;
    QuantizerKind kind = QuantizerKind::gptq;

    std::vector<std::uint8_t> codes;
    QuantGrid grid;

    std::vector<std::uint16_t> indices;
    Codebook codebook;

    LowRankFactors factors;
    RotationPlan plan;
    std::vector<double> scale; ///< s, binary32-representable
    LayerMeta meta;

    [[nodiscard]] bool is_vq() const noexcept { return kind == QuantizerKind::vq; }
    /// Dequantized residual R_hat' in the rotated frame.
    [[nodiscard]] Matrix rotated_residual() const;
    /// Throws std::invalid_argument naming the first inconsistent field.
    void validate() const;

    bool operator==(const QuantizedLayer&) const = default;
};

/// U (S (V' X)) + R_hat' (Q^T P^T X) for X with `cols` rows.
Matrix reconstruct_output(const QuantizedLayer& layer, const Matrix& x);

/// d_q + d_o/g + r d_r/n + r d_r/m + 2 d_o/n + r d_o/(m n). Pass g = 0 to drop
/// the group-scale term.
double average_bits(std::size_t m, std::size_t n, double d_q, std::size_t g, std::size_t r, double d_r, double d_o);

struct BitReport {
    double formula = 0.0;   ///< average_bits for the layer's parameters (+ codebook bits in VQ mode)
    double measured = 0.0;  ///< 8 * payload section bytes / (m n)
    double container = 0.0; ///< 8 * whole container bytes / (m n), framing included
};

/// Bits per weight of the stored low-rank factors (8 for e4m3, 64 for full).
unsigned factor_bits(FactorPrecision p) noexcept;

/// LPRQ container. Layout: "LPRQ", u32 LE version, u64 LE metadata length,
/// UTF-8 JSON metadata, zero padding to 64 bytes, then the payload sections,
/// each starting on a 64-byte boundary. Section offsets in the metadata are
/// relative to the start of the payload.
std::vector<std::uint8_t> pack_layer(const QuantizedLayer& layer);
/// Throws std::runtime_error on a malformed container.
QuantizedLayer unpack_layer(std::span<const std::uint8_t> bytes);

struct ContainerSummary {
    std::string metadata_json; ///< pretty-printed
    std::size_t total_bytes = 0;
    std::size_t payload_bytes = 0; ///< sum of section lengths, padding excluded
};
ContainerSummary summarize_container(std::span<const std::uint8_t> bytes);

BitReport bit_report(const QuantizedLayer& layer, std::span<const std::uint8_t> container);

} // namespace lopro
