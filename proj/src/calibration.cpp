#include "lopro/calibration.hpp"

#include "lopro/random.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lopro {

void StatsAccumulator::add(const Matrix& batch) {
    if (batch.cols() == 0) {
        throw std::invalid_argument("accumulate_stats: batch has no channels");
    }
    if (n_ == 0) {
        n_ = batch.cols();
        xx_.assign(n_ * n_, 0.0);
        abs_sum_.assign(n_, 0.0);
        xx_mean_sum_.assign(pooling_ == Pooling::per_batch ? n_ * n_ : 0, 0.0);
        abs_mean_sum_.assign(pooling_ == Pooling::per_batch ? n_ : 0, 0.0);
    } else if (batch.cols() != n_) {
        throw std::invalid_argument("accumulate_stats: batch has " + std::to_string(batch.cols()) +
                                    " channels, expected " + std::to_string(n_));
    }
    if (batch.rows() == 0) {
        return;
    }
    for (std::size_t t = 0; t < batch.rows(); ++t) {
        const auto x = batch.row(t);
        for (std::size_t i = 0; i < n_; ++i) {
            const double xi = x[i];
            abs_sum_[i] += std::abs(xi);
            double* acc = xx_.data() + i * n_;
            for (std::size_t j = i; j < n_; ++j) {
                acc[j] += xi * x[j];
            }
        }
    }
    count_ += batch.rows();
    if (pooling_ == Pooling::per_batch) {
        const double inv = 1.0 / static_cast<double>(batch.rows());
        for (std::size_t k = 0; k < xx_.size(); ++k) {
            xx_mean_sum_[k] += xx_[k] * inv;
        }
        for (std::size_t i = 0; i < n_; ++i) {
            abs_mean_sum_[i] += abs_sum_[i] * inv;
        }
        std::fill(xx_.begin(), xx_.end(), 0.0);
        std::fill(abs_sum_.begin(), abs_sum_.end(), 0.0);
    }
    ++batches_;
}

CalibrationStats StatsAccumulator::finish(const ScaleOptions& scale) const {
    if (count_ == 0) {
        throw std::invalid_argument("accumulate_stats: zero calibration rows");
    }
    const bool per_batch = pooling_ == Pooling::per_batch;
    const auto& xx = per_batch ? xx_mean_sum_ : xx_;
    const auto& abs = per_batch ? abs_mean_sum_ : abs_sum_;
    const double inv = 1.0 / static_cast<double>(per_batch ? batches_ : count_);

    CalibrationStats stats;
    stats.sample_count = count_;
    stats.hessian = Matrix(n_, n_);
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = i; j < n_; ++j) {
            const double v = xx[i * n_ + j] * inv;
            stats.hessian(i, j) = v;
            stats.hessian(j, i) = v;
        }
    }
    stats.act_mean.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        stats.act_mean[i] = abs[i] * inv;
    }
    derive_scale(stats, scale);
    return stats;
}

CalibrationStats accumulate_stats(std::span<const Matrix> batches, const ScaleOptions& scale, Pooling pooling) {
    if (batches.empty()) {
        throw std::invalid_argument("accumulate_stats: no batches");
    }
    StatsAccumulator acc(pooling);
    for (const auto& b : batches) {
        acc.add(b);
    }
    return acc.finish(scale);
}

std::vector<double> derive_scale(std::span<const double> act_mean, double exponent, double eps) {
    if (act_mean.empty()) {
        throw std::invalid_argument("derive_scale: empty activation means");
    }
    if (!(eps > 0.0)) {
        throw std::invalid_argument("derive_scale: eps must be positive");
    }
    const auto [lo, hi] = std::minmax_element(act_mean.begin(), act_mean.end());
    if (*lo < 0.0) {
        throw std::invalid_argument("derive_scale: activation means must be non-negative");
    }
    if (*hi <= 0.0) {
        std::clog << "warning: derive_scale: all activation means are zero; scales clamp to eps\n";
    }
    const double denom = std::sqrt(std::max(*hi, eps) * std::max(*lo, eps));
    std::vector<double> s(act_mean.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = std::pow(std::max(act_mean[i], eps), exponent) / denom;
        if (!(s[i] > 0.0) || !std::isfinite(s[i])) {
            throw std::domain_error("derive_scale: channel " + std::to_string(i) +
                                    " produced a non-positive or non-finite scale");
        }
    }
    return s;
}

const std::vector<double>& derive_scale(CalibrationStats& stats, const ScaleOptions& options) {
    stats.scale = derive_scale(stats.act_mean, options.exponent, options.eps);
    return stats.scale;
}

std::vector<std::size_t> synthetic_outlier_channels(std::size_t n, std::size_t outlier_channels, std::uint64_t seed) {
    if (outlier_channels > n) {
        throw std::invalid_argument("synthesize_calibration: outlier_channels (" + std::to_string(outlier_channels) +
                                    ") exceeds n (" + std::to_string(n) + ")");
    }
    std::vector<std::size_t> channels(n);
    std::iota(channels.begin(), channels.end(), 0);
    GaussianSource pick(seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t i = 0; i < outlier_channels; ++i) {
        const std::size_t j = i + pick.uniform_index(n - i);
        std::swap(channels[i], channels[j]);
    }
    channels.resize(outlier_channels);
    std::sort(channels.begin(), channels.end());
    return channels;
}

Matrix synthesize_calibration(std::size_t n, std::size_t tokens, std::size_t outlier_channels, double outlier_gain,
                              std::uint64_t seed) {
    const auto outliers = synthetic_outlier_channels(n, outlier_channels, seed);
    std::vector<double> gain(n, 1.0);
    for (auto c : outliers) {
        gain[c] = outlier_gain;
    }
    GaussianSource rng(seed);
    Matrix x(tokens, n);
    for (std::size_t t = 0; t < tokens; ++t) {
        auto row = x.row(t);
        for (std::size_t c = 0; c < n; ++c) {
            row[c] = rng.normal() * gain[c];
        }
    }
    return x;
}

} // namespace lopro
