#pragma once

#include "lopro/calibration.hpp"
#include "lopro/container.hpp"
#include "lopro/quantizers.hpp"
#include "lopro/r1svd.hpp"

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lopro {

struct PipelineConfig {
    std::string name = "layer";
    unsigned bits = 2;
    std::size_t group_size = 128;
    bool symmetric = true;
    std::size_t rank = 16;
    unsigned iterations = 8;
    std::size_t identity_block = 256;
    std::size_t hadamard_block = 256;
    bool permute = true;
    QuantizerKind quantizer = QuantizerKind::gptq;
    std::size_t vq_dim = 4;
    unsigned lloyd_iters = 4;
    double damp = kDefaultDamp;
    double exponent = 2.5;
    double scale_eps = 1e-8;
    FactorPrecision precision = FactorPrecision::e4m3;
    std::uint64_t seed = 0;
    unsigned original_bits = 16;

    // Inputs and output for file-driven runs; the pipeline itself ignores them.
    std::string weights_path;
    std::string calib_path;
    std::string calib_synth; ///< "n,tokens,outliers,gain,seed"
    std::string out_path;

    bool operator==(const PipelineConfig&) const = default;
};

/// Shape-independent checks; throws std::invalid_argument naming the field.
void validate_config(const PipelineConfig& config);
/// Adds the checks that depend on the layer shape (rank, blocks, group size).
void validate_config(const PipelineConfig& config, std::size_t rows, std::size_t cols);

/// Seed the VQ codebook sampler derives from the pipeline seed.
std::uint64_t vq_seed(std::uint64_t seed) noexcept;

/// A failure inside one pipeline stage; what() starts with the stage name.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& detail)
        : std::runtime_error("stage '" + stage + "': " + detail), stage_(std::move(stage)) {}
    [[nodiscard]] const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct StageTimings {
    double decompose = 0.0; ///< seconds
    double rotate = 0.0;
    double quantize = 0.0;
    double pack = 0.0;
};

struct PipelineResult {
    QuantizedLayer layer;
    std::vector<std::uint8_t> container;
    StageTimings timings;
    double lowrank_loss = 0.0; ///< tr(R H R^T): loss with the residual dropped
    double loss = 0.0;         ///< tr(E H E^T) of the full reconstruction
    BitReport bits;
};

/// Scaled decomposition, importance permutation, block rotation, residual
/// quantization in the rotated frame, packing. Stage names: config, scale,
/// decompose, rotate, quantize, pack.
PipelineResult quantize_layer_pipeline(const Matrix& w, const CalibrationStats& stats, const PipelineConfig& config);

} // namespace lopro
