#include "lopro/pipeline.hpp"

#include "lopro/numeric_formats.hpp"
#include "lopro/rotation_plan.hpp"

#include <chrono>
#include <cmath>
#include <string>

namespace lopro {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void fail(const char* field, const std::string& why) {
    throw std::invalid_argument("config: " + std::string(field) + " " + why);
}

// Runs `fn`, turning any std::exception into a StageError for `stage`.
template <class Fn>
auto in_stage(const char* stage, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

} // namespace

void validate_config(const PipelineConfig& c) {
    if (c.bits != 2 && c.bits != 3 && c.bits != 4 && c.bits != 8) {
        fail("--bits", "= " + std::to_string(c.bits) + " (expected 2, 3, 4 or 8)");
    }
    if (c.group_size == 0) {
        fail("--group-size", "must be positive");
    }
    if (c.iterations > 64) {
        fail("--it", "= " + std::to_string(c.iterations) + " exceeds 64");
    }
    if (!is_power_of_two(c.hadamard_block)) {
        fail("--b-h", "= " + std::to_string(c.hadamard_block) + " must be a power of two");
    }
    if (c.quantizer == QuantizerKind::vq) {
        if (c.vq_dim == 0) {
            fail("--vq-dim", "must be positive");
        }
        if (c.bits * c.vq_dim > kMaxCodebookBits) {
            fail("--vq-dim", "= " + std::to_string(c.vq_dim) + " with bits = " + std::to_string(c.bits) +
                               " needs a codebook of 2^" + std::to_string(c.bits * c.vq_dim) +
                               " entries (limit 2^16)");
        }
    }
    if (!(c.damp >= 0.0) || !std::isfinite(c.damp)) {
        fail("--damp", "must be finite and non-negative");
    }
    if (!std::isfinite(c.exponent)) {
        fail("--exponent", "must be finite");
    }
    if (!(c.scale_eps > 0.0)) {
        fail("scale-eps", "must be positive");
    }
    if (c.original_bits == 0) {
        fail("--original-bits", "must be positive");
    }
}

void validate_config(const PipelineConfig& c, std::size_t rows, std::size_t cols) {
    validate_config(c);
    if (rows == 0 || cols == 0) {
        throw std::invalid_argument("config: empty weight matrix");
    }
    if (c.rank > std::min(rows, cols)) {
        fail("--rank", "= " + std::to_string(c.rank) + " exceeds min(m, n) = " + std::to_string(std::min(rows, cols)));
    }
    if (c.quantizer == QuantizerKind::vq) {
        if (cols % c.vq_dim != 0) {
            fail("--vq-dim", "= " + std::to_string(c.vq_dim) + " does not divide n = " + std::to_string(cols));
        }
    } else if (cols % c.group_size != 0) {
        fail("--group-size", "= " + std::to_string(c.group_size) + " does not divide n = " + std::to_string(cols));
    }
    if (c.identity_block > cols) {
        fail("--b-i", "= " + std::to_string(c.identity_block) + " exceeds n = " + std::to_string(cols));
    }
    try {
        make_plan(cols, PermutationIndex::identity(cols), c.identity_block, c.hadamard_block);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("config: --b-i/--b-h: ") + e.what());
    }
}

std::uint64_t vq_seed(std::uint64_t seed) noexcept { return seed ^ 0x5bd1e9955bd1e995ULL; }

PipelineResult quantize_layer_pipeline(const Matrix& w, const CalibrationStats& stats, const PipelineConfig& config) {
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    in_stage("config", [&] {
        validate_config(config, m, n);
        if (stats.hessian.rows() != n || stats.hessian.cols() != n || stats.act_mean.size() != n) {
            throw std::invalid_argument("calibration covers " + std::to_string(stats.act_mean.size()) +
                                        " channels, weight has " + std::to_string(n) + " columns");
        }
        return 0;
    });

    PipelineResult out;
    QuantizedLayer& layer = out.layer;
    layer.name = config.name;
    layer.rows = m;
    layer.cols = n;
    layer.kind = config.quantizer;
    layer.meta.damp = config.damp;
    layer.meta.iterations = config.iterations;
    layer.meta.decompose_seed = config.seed;
    layer.meta.exponent = config.exponent;
    layer.meta.original_bits = config.original_bits;

    layer.scale = in_stage("scale", [&] {
        auto s = derive_scale(stats.act_mean, config.exponent, config.scale_eps);
        for (auto& x : s) {
            x = float_round(x);
            if (!(x > 0.0) || !std::isfinite(x)) {
                throw std::domain_error("activation scale leaves the binary32 range");
            }
        }
        return s;
    });

    auto t0 = Clock::now();
    ScaledDecomposition dec = in_stage("decompose", [&] {
        return scaled_decompose(w, layer.scale, config.rank, config.iterations, config.precision, config.seed);
    });
    out.timings.decompose = seconds_since(t0);
    layer.factors = std::move(dec.factors);

    t0 = Clock::now();
    Matrix rotated;
    Matrix h_rot;
    in_stage("rotate", [&] {
        const PermutationIndex perm =
            config.permute ? build_permutation(stats.hessian.diag(), dec.residual) : PermutationIndex::identity(n);
        layer.plan = make_plan(n, perm, config.identity_block, config.hadamard_block);
        rotated = apply_block_rotation(dec.residual, layer.plan);
        h_rot = rotate_hessian(stats.hessian, layer.plan);
        return 0;
    });
    out.timings.rotate = seconds_since(t0);

    t0 = Clock::now();
    const Matrix residual_hat = in_stage("quantize", [&] {
        QuantGrid grid;
        grid.bits = config.bits;
        grid.group_size = config.group_size;
        grid.symmetric = config.symmetric;
        switch (config.quantizer) {
        case QuantizerKind::rtn: {
            auto q = rtn_quantize(rotated, grid);
            layer.codes = std::move(q.codes);
            layer.grid = std::move(q.grid);
            layer.meta.damp_used = 0.0;
            return std::move(q.dequantized);
        }
        case QuantizerKind::gptq: {
            auto q = gptq_quantize(rotated, h_rot, grid, config.damp);
            layer.meta.damp_used = q.damp_used;
            layer.codes = std::move(q.codes);
            layer.grid = std::move(q.grid);
            return std::move(q.dequantized);
        }
        case QuantizerKind::vq: {
            VqOptions opt;
            opt.bits = config.bits;
            opt.dim = config.vq_dim;
            opt.lloyd_iters = config.lloyd_iters;
            opt.seed = vq_seed(config.seed);
            opt.damp = config.damp;
            layer.meta.vq_seed = opt.seed;
            layer.meta.lloyd_iters = opt.lloyd_iters;
            auto q = vq_quantize(rotated, h_rot, opt);
            layer.meta.damp_used = q.damp_used;
            layer.indices = std::move(q.indices);
            layer.codebook = std::move(q.codebook);
            layer.grid = QuantGrid{};
            layer.grid.bits = config.bits;
            return std::move(q.dequantized);
        }
        }
        throw std::logic_error("unhandled quantizer kind");
    });
    out.timings.quantize = seconds_since(t0);

    out.lowrank_loss = proxy_loss(dec.residual, Matrix(m, n), stats.hessian);
    // The rotated-frame loss equals the original-frame loss of W_r + R_hat' Q^T P^T.
    out.loss = proxy_loss(rotated, residual_hat, h_rot);

    t0 = Clock::now();
    out.container = in_stage("pack", [&] { return pack_layer(layer); });
    out.timings.pack = seconds_since(t0);
    out.bits = bit_report(layer, out.container);
    return out;
}

} // namespace lopro
