#include "lopro/synthetic.hpp"

#include "lopro/random.hpp"

#include <cmath>
#include <stdexcept>

namespace lopro {

Matrix outlier_matrix(std::size_t rows, std::size_t cols, double noise, double fraction, double magnitude,
                      std::uint64_t seed) {
    GaussianSource rng(seed);
    Matrix m(rows, cols);
    for (double& x : m.values()) {
        x = noise * rng.normal();
        if (rng.uniform_open() < fraction) {
            const double sign = rng.uniform_open() < 0.5 ? -1.0 : 1.0;
            x += sign * magnitude * (1.0 + rng.uniform_open()) * noise;
        }
    }
    return m;
}

SyntheticLayer make_synthetic_layer(const SyntheticSpec& spec, const ScaleOptions& scale) {
    if (spec.rows == 0 || spec.cols == 0 || spec.tokens == 0) {
        throw std::invalid_argument("make_synthetic_layer: empty shape");
    }
    if (spec.outlier_fraction < 0.0 || spec.outlier_fraction > 1.0) {
        throw std::invalid_argument("make_synthetic_layer: outlier_fraction must lie in [0, 1]");
    }
    const std::size_t m = spec.rows;
    const std::size_t n = spec.cols;
    const std::uint64_t seed = spec.seed * 0x9e3779b97f4a7c15ULL;

    SyntheticLayer out;
    out.weights = outlier_matrix(m, n, spec.noise_scale, spec.outlier_fraction, spec.outlier_magnitude, seed + 1);
    if (spec.structure_rank > 0) {
        GaussianSource rng(seed + 2);
        const double c = spec.structure_scale / std::sqrt(static_cast<double>(spec.structure_rank));
        Matrix a(m, spec.structure_rank);
        Matrix b(spec.structure_rank, n);
        for (double& x : a.values()) {
            x = rng.normal();
        }
        for (double& x : b.values()) {
            x = rng.normal();
        }
        out.weights = out.weights + c * matmul(a, b);
    }
    out.activations = synthesize_calibration(n, spec.tokens, spec.outlier_channels, spec.outlier_gain, seed + 3);
    StatsAccumulator acc;
    acc.add(out.activations);
    out.stats = acc.finish(scale);
    return out;
}

} // namespace lopro
