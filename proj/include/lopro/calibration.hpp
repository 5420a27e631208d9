#pragma once

#include "lopro/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lopro {

/// Second-moment statistics of a layer's inputs.
///
/// Activations arrive as token rows (T x n); `hessian` is (1/T) sum_t x_t x_t^T
/// and `act_mean` is the per-channel mean of |x|.
struct CalibrationStats {
    Matrix hessian;
    std::vector<double> act_mean;
    std::size_t sample_count = 0;
    std::vector<double> scale;

    [[nodiscard]] std::size_t channels() const noexcept { return act_mean.size(); }
};

struct ScaleOptions {
    double exponent = 2.5;
    double eps = 1e-8;
};

/// How token statistics are averaged. `pooled` weights every token equally;
/// `per_batch` averages each batch (sequence) first, then averages batches.
enum class Pooling { pooled, per_batch };

class StatsAccumulator {
public:
    explicit StatsAccumulator(Pooling pooling = Pooling::pooled) : pooling_(pooling) {}

    /// Adds a T x n batch. The first batch fixes n.
    void add(const Matrix& batch);
    [[nodiscard]] std::size_t sample_count() const noexcept { return count_; }
    /// Throws std::invalid_argument when nothing was accumulated.
    [[nodiscard]] CalibrationStats finish(const ScaleOptions& scale = {}) const;

private:
    Pooling pooling_;
    std::size_t n_ = 0;
    std::size_t count_ = 0;
    std::size_t batches_ = 0;
    std::vector<double> xx_;      // upper triangle, row-major n x n
    std::vector<double> abs_sum_;
    // per_batch mode keeps batch means here
    std::vector<double> xx_mean_sum_;
    std::vector<double> abs_mean_sum_;
};

CalibrationStats accumulate_stats(std::span<const Matrix> batches, const ScaleOptions& scale = {},
                                  Pooling pooling = Pooling::pooled);

/// s_i = max(m_i, eps)^exponent / sqrt(max(max m, eps) * max(min m, eps)).
/// Emits a warning on std::clog when every channel is dead.
std::vector<double> derive_scale(std::span<const double> act_mean, double exponent = 2.5, double eps = 1e-8);
/// Same, storing the result into stats.scale.
const std::vector<double>& derive_scale(CalibrationStats& stats, const ScaleOptions& options);

/// Channels boosted by synthesize_calibration for a given (n, outliers, seed).
std::vector<std::size_t> synthetic_outlier_channels(std::size_t n, std::size_t outlier_channels, std::uint64_t seed);

/// tokens x n standard-normal activations; the outlier channels have their
/// standard deviation multiplied by outlier_gain. Deterministic from seed.
Matrix synthesize_calibration(std::size_t n, std::size_t tokens, std::size_t outlier_channels, double outlier_gain,
                              std::uint64_t seed);

} // namespace lopro
