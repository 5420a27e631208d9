#include "lopro/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace lopro {

double GaussianSource::uniform_open() noexcept {
    for (;;) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        if (u > 0.0) {
            return u;
        }
    }
}

std::size_t GaussianSource::uniform_index(std::size_t bound) noexcept {
    // Rejection keeps the draw unbiased and identical across platforms.
    const std::uint64_t b = bound;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % b;
    for (;;) {
        const std::uint64_t x = engine_();
        if (x < limit) {
            return static_cast<std::size_t>(x % b);
        }
    }
}

double GaussianSource::normal() noexcept {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
}

std::vector<double> GaussianSource::normal_vector(std::size_t n) {
    std::vector<double> out(n);
    for (auto& x : out) {
        x = normal();
    }
    return out;
}

} // namespace lopro
