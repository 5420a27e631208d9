#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace lopro {

/// Identifier written into containers so a reader knows how seeds map to draws.
inline constexpr std::string_view kPrngId = "mt19937_64/box-muller-v1";

/// Portable Gaussian stream: std::mt19937_64 is bit-specified by the standard,
/// but std::normal_distribution is not, so the transform is done here.
class GaussianSource {
public:
    explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in (0, 1), 53-bit resolution.
    double uniform_open() noexcept;
    /// Uniform integer in [0, bound), bound > 0.
    std::size_t uniform_index(std::size_t bound) noexcept;
    double normal() noexcept;
    std::vector<double> normal_vector(std::size_t n);

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

} // namespace lopro
