#pragma once

#include "lopro/calibration.hpp"
#include "lopro/matrix.hpp"

#include <cstddef>
#include <cstdint>

namespace lopro {

/// Generator for desk-scale layers: Gaussian weights with a few dominant
/// directions (correlated columns) and sparse large-magnitude outlier entries,
/// plus activations from synthesize_calibration.
struct SyntheticSpec {
    std::size_t rows = 64;
    std::size_t cols = 64;
    std::size_t tokens = 256;
    std::size_t structure_rank = 4; ///< dominant directions in W
    double structure_scale = 1.0;
    double noise_scale = 1.0;        ///< std-dev of the dense Gaussian part
    double outlier_fraction = 0.03;  ///< share of weight entries that get an outlier
    double outlier_magnitude = 3.0;  ///< outliers add +-magnitude * (1 + U(0,1)) * noise_scale
    std::size_t outlier_channels = 4;
    double outlier_gain = 2.0;       ///< activation std-dev multiplier on outlier channels
    std::uint64_t seed = 0;
};

struct SyntheticLayer {
    Matrix weights;     ///< rows x cols
    Matrix activations; ///< tokens x cols
    CalibrationStats stats;
};

SyntheticLayer make_synthetic_layer(const SyntheticSpec& spec, const ScaleOptions& scale = {});

/// Gaussian(0, noise^2) entries, each replaced with probability `fraction`
/// by that value plus +-magnitude * (1 + U(0,1)) * noise.
Matrix outlier_matrix(std::size_t rows, std::size_t cols, double noise, double fraction, double magnitude,
                      std::uint64_t seed);

} // namespace lopro
