#include "lopro/quantizers.hpp"

#include "lopro/numeric_formats.hpp"
#include "lopro/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lopro {

namespace {

constexpr int kCholeskyRetries = 3;
constexpr double kSmallestHalf = 0x1.0p-24;

struct GroupParams {
    double scale = 1.0;
    std::int32_t zero = 0;
};

double fit_scale(double raw) {
    double s = half_round(std::min(raw, kHalfMax));
    if (s < kSmallestHalf) {
        s = kSmallestHalf;
    }
    return s;
}

GroupParams fit_group_once(std::span<const double> x, const QuantGrid& grid) {
    if (grid.symmetric) {
        double amax = 0.0;
        for (double v : x) {
            amax = std::max(amax, std::abs(v));
        }
        if (amax == 0.0) {
            return {};
        }
        const double qmax = static_cast<double>(grid.symmetric_offset() - 1);
        return {fit_scale(amax / qmax), 0};
    }
    double lo = 0.0;
    double hi = 0.0;
    for (double v : x) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) {
        return {};
    }
    const double maxq = static_cast<double>(grid.max_code());
    const double scale = fit_scale((hi - lo) / maxq);
    const double zero = std::clamp(std::nearbyint(-lo / scale), 0.0, maxq);
    return {scale, static_cast<std::int32_t>(zero)};
}

// Returns the stored code for x.
std::uint8_t quantize_value(double x, const GroupParams& p, const QuantGrid& grid) {
    if (grid.symmetric) {
        const double qmax = static_cast<double>(grid.symmetric_offset() - 1);
        const double q = std::clamp(std::nearbyint(x / p.scale), -qmax, qmax);
        return static_cast<std::uint8_t>(static_cast<std::int32_t>(q) + grid.symmetric_offset());
    }
    const double maxq = static_cast<double>(grid.max_code());
    const double q = std::clamp(std::nearbyint(x / p.scale) + p.zero, 0.0, maxq);
    return static_cast<std::uint8_t>(q);
}

double dequantize_code(std::uint8_t code, const GroupParams& p, const QuantGrid& grid) {
    const std::int32_t level = grid.symmetric ? static_cast<std::int32_t>(code) - grid.symmetric_offset()
                                              : static_cast<std::int32_t>(code) - p.zero;
    return static_cast<double>(level) * p.scale;
}

// Symmetric fits are already stable under requantization. An asymmetric fit
// is refit on its own dequantized output until nothing changes, so that
// quantizing the dequantized group reproduces it. The scale cannot grow from
// one round to the next, so this settles in a few rounds.
GroupParams fit_group(std::span<const double> x, const QuantGrid& grid) {
    GroupParams p = fit_group_once(x, grid);
    if (grid.symmetric) {
        return p;
    }
    constexpr int kMaxRefits = 32;
    std::vector<double> deq(x.size());
    for (int round = 0; round < kMaxRefits; ++round) {
        for (std::size_t j = 0; j < x.size(); ++j) {
            deq[j] = dequantize_code(quantize_value(x[j], p, grid), p, grid);
        }
        const GroupParams next = fit_group_once(deq, grid);
        if (next.scale == p.scale && next.zero == p.zero) {
            break;
        }
        p = next;
    }
    return p;
}

GroupParams params_at(const QuantGrid& grid, std::size_t index) {
    return {grid.scales[index], grid.symmetric ? 0 : grid.zeros[index]};
}

void store_params(QuantGrid& grid, std::size_t index, const GroupParams& p) {
    grid.scales[index] = p.scale;
    if (!grid.symmetric) {
        grid.zeros[index] = p.zero;
    }
}

void reset_tables(QuantGrid& grid, std::size_t rows, std::size_t cols) {
    const std::size_t groups = rows * (cols / grid.group_size);
    grid.scales.assign(groups, 1.0);
    grid.zeros.assign(grid.symmetric ? 0 : groups, 0);
}

// Lower Cholesky in place; false if a pivot is not positive.
bool cholesky_lower(Matrix& a) {
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
        const auto rj = a.row(j);
        double d = rj[j];
        for (std::size_t k = 0; k < j; ++k) {
            d -= rj[k] * rj[k];
        }
        if (!(d > 0.0) || !std::isfinite(d)) {
            return false;
        }
        const double ljj = std::sqrt(d);
        rj[j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            const auto ri = a.row(i);
            double s = ri[j];
            for (std::size_t k = 0; k < j; ++k) {
                s -= ri[k] * rj[k];
            }
            ri[j] = s / ljj;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto ri = a.row(i);
        std::fill(ri.begin() + static_cast<std::ptrdiff_t>(i) + 1, ri.end(), 0.0);
    }
    return true;
}

bool inverse_cholesky_upper(const Matrix& hd, Matrix& upper) {
    const std::size_t n = hd.rows();
    Matrix l = hd;
    if (!cholesky_lower(l)) {
        return false;
    }
    // X = L^-1, built row by row.
    Matrix x(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = x.row(i);
        xi[i] = 1.0;
        const auto li = l.row(i);
        for (std::size_t k = 0; k < i; ++k) {
            const double c = li[k];
            if (c == 0.0) {
                continue;
            }
            const auto xk = x.row(k);
            for (std::size_t c2 = 0; c2 <= k; ++c2) {
                xi[c2] -= c * xk[c2];
            }
        }
        const double inv = 1.0 / li[i];
        for (std::size_t c2 = 0; c2 <= i; ++c2) {
            xi[c2] *= inv;
        }
    }
    // H^-1 = X^T X (lower triangle accumulated, then mirrored).
    Matrix hinv(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto xk = x.row(k);
        for (std::size_t a = 0; a <= k; ++a) {
            const double xa = xk[a];
            if (xa == 0.0) {
                continue;
            }
            auto ha = hinv.row(a);
            for (std::size_t b = 0; b <= a; ++b) {
                ha[b] += xa * xk[b];
            }
        }
    }
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < a; ++b) {
            hinv(b, a) = hinv(a, b);
        }
    }
    if (!cholesky_lower(hinv)) {
        return false;
    }
    upper = transpose(hinv);
    return true;
}

void check_hessian(const Matrix& h, std::size_t n, const char* who) {
    if (h.rows() != n || h.cols() != n) {
        throw std::invalid_argument(std::string(who) + ": Hessian is " + std::to_string(h.rows()) + "x" +
                                    std::to_string(h.cols()) + ", expected " + std::to_string(n) + "x" +
                                    std::to_string(n));
    }
}

// Subtract the compensation of column j's rounding error from columns > j of row i.
inline void propagate(std::span<double> row, std::size_t j, double err, std::span<const double> urow) {
    for (std::size_t k = j + 1; k < row.size(); ++k) {
        row[k] -= err * urow[k];
    }
}

} // namespace

std::string_view to_string(QuantizerKind k) noexcept {
    switch (k) {
    case QuantizerKind::rtn: return "rtn";
    case QuantizerKind::gptq: return "gptq";
    case QuantizerKind::vq: return "vq";
    }
    return "?";
}

QuantizerKind parse_quantizer_kind(std::string_view s) {
    if (s == "rtn") {
        return QuantizerKind::rtn;
    }
    if (s == "gptq") {
        return QuantizerKind::gptq;
    }
    if (s == "vq") {
        return QuantizerKind::vq;
    }
    throw std::invalid_argument("unknown quantizer '" + std::string(s) + "' (expected rtn, gptq or vq)");
}

void validate_grid(const QuantGrid& grid, std::size_t cols) {
    if (grid.bits != 2 && grid.bits != 3 && grid.bits != 4 && grid.bits != 8) {
        throw std::invalid_argument("quantizer: bits = " + std::to_string(grid.bits) + " (expected 2, 3, 4 or 8)");
    }
    if (grid.group_size == 0 || cols % grid.group_size != 0) {
        throw std::invalid_argument("quantizer: group size " + std::to_string(grid.group_size) +
                                    " does not divide " + std::to_string(cols) + " columns");
    }
}

Matrix dequantize(std::span<const std::uint8_t> codes, const QuantGrid& grid, std::size_t rows, std::size_t cols) {
    validate_grid(grid, cols);
    if (codes.size() != rows * cols) {
        throw std::invalid_argument("dequantize: code count does not match shape");
    }
    const std::size_t groups_per_row = cols / grid.group_size;
    if (grid.scales.size() != rows * groups_per_row ||
        (!grid.symmetric && grid.zeros.size() != grid.scales.size())) {
        throw std::invalid_argument("dequantize: group table size does not match shape");
    }
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        auto row = out.row(i);
        for (std::size_t j = 0; j < cols; ++j) {
            const auto p = params_at(grid, i * groups_per_row + j / grid.group_size);
            row[j] = dequantize_code(codes[i * cols + j], p, grid);
        }
    }
    return out;
}

ScalarQuantized rtn_quantize(const Matrix& m, QuantGrid grid) {
    validate_grid(grid, m.cols());
    reset_tables(grid, m.rows(), m.cols());
    const std::size_t g = grid.group_size;
    const std::size_t groups_per_row = m.cols() / g;
    ScalarQuantized out{std::vector<std::uint8_t>(m.size()), {}, Matrix(m.rows(), m.cols())};
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto row = m.row(i);
        auto deq = out.dequantized.row(i);
        for (std::size_t b = 0; b < groups_per_row; ++b) {
            const auto p = fit_group(row.subspan(b * g, g), grid);
            store_params(grid, i * groups_per_row + b, p);
            for (std::size_t j = b * g; j < (b + 1) * g; ++j) {
                const auto code = quantize_value(row[j], p, grid);
                out.codes[i * m.cols() + j] = code;
                deq[j] = dequantize_code(code, p, grid);
            }
        }
    }
    out.grid = std::move(grid);
    return out;
}

InverseCholesky damped_inverse_cholesky(const Matrix& h, double damp) {
    if (damp < 0.0) {
        throw std::invalid_argument("quantizer: damp must be non-negative");
    }
    const std::size_t n = h.rows();
    Matrix base = h;
    CompensatedSum diag_sum;
    for (std::size_t i = 0; i < n; ++i) {
        if (base(i, i) == 0.0) {
            base(i, i) = 1.0;
        }
        diag_sum.add(base(i, i));
    }
    const double mean_diag = n == 0 ? 1.0 : diag_sum.value() / static_cast<double>(n);

    double attempt_damp = damp;
    for (int attempt = 0; attempt <= kCholeskyRetries; ++attempt) {
        Matrix hd = base;
        for (std::size_t i = 0; i < n; ++i) {
            hd(i, i) += attempt_damp * mean_diag;
        }
        Matrix upper;
        if (inverse_cholesky_upper(hd, upper)) {
            return {std::move(upper), attempt_damp};
        }
        attempt_damp = (attempt_damp > 0.0 ? attempt_damp : kDefaultDamp / 10.0) * 10.0;
    }
    throw std::runtime_error("quantizer: Cholesky of the damped Hessian failed after " +
                             std::to_string(kCholeskyRetries) + " damping increases");
}

ScalarQuantized gptq_quantize(const Matrix& r, const Matrix& h, QuantGrid grid, double damp) {
    const std::size_t rows = r.rows();
    const std::size_t cols = r.cols();
    validate_grid(grid, cols);
    check_hessian(h, cols, "gptq_quantize");
    reset_tables(grid, rows, cols);
    InverseCholesky ic = damped_inverse_cholesky(h, damp);
    const Matrix& u = ic.upper;

    const std::size_t g = grid.group_size;
    const std::size_t groups_per_row = cols / g;
    Matrix w = r;
    ScalarQuantized out{std::vector<std::uint8_t>(r.size()), {}, Matrix(rows, cols)};
    std::vector<GroupParams> current(rows);
    for (std::size_t j = 0; j < cols; ++j) {
        const auto urow = u.row(j);
        const double ujj = urow[j];
        const std::size_t group = j / g;
        for (std::size_t i = 0; i < rows; ++i) {
            auto wrow = w.row(i);
            if (j % g == 0) {
                current[i] = fit_group(std::span<const double>(wrow).subspan(j, g), grid);
                store_params(grid, i * groups_per_row + group, current[i]);
            }
            const auto code = quantize_value(wrow[j], current[i], grid);
            const double q = dequantize_code(code, current[i], grid);
            out.codes[i * cols + j] = code;
            out.dequantized(i, j) = q;
            const double err = (wrow[j] - q) / ujj;
            propagate(wrow, j, err, urow);
        }
    }
    out.grid = std::move(grid);
    out.damp_used = ic.damp_used;
    return out;
}

double proxy_loss(const Matrix& w, const Matrix& w_hat, const Matrix& h) {
    if (w.rows() != w_hat.rows() || w.cols() != w_hat.cols()) {
        throw std::invalid_argument("proxy_loss: weight shapes differ");
    }
    check_hessian(h, w.cols(), "proxy_loss");
    const Matrix e = w_hat - w;
    const Matrix eh = matmul(e, h);
    CompensatedSum total;
    for (std::size_t i = 0; i < e.rows(); ++i) {
        const auto a = e.row(i);
        const auto b = eh.row(i);
        for (std::size_t j = 0; j < a.size(); ++j) {
            total.add(a[j] * b[j]);
        }
    }
    return total.value();
}

Matrix dequantize(std::span<const std::uint16_t> indices, const Codebook& codebook, std::size_t rows,
                  std::size_t cols) {
    const std::size_t dim = codebook.dim;
    if (dim == 0 || cols % dim != 0 || indices.size() != rows * (cols / dim)) {
        throw std::invalid_argument("dequantize: VQ index count does not match shape");
    }
    Matrix out(rows, cols);
    const std::size_t blocks = cols / dim;
    for (std::size_t i = 0; i < rows; ++i) {
        auto row = out.row(i);
        for (std::size_t b = 0; b < blocks; ++b) {
            const std::size_t k = indices[i * blocks + b];
            if (k >= codebook.size()) {
                throw std::invalid_argument("dequantize: VQ index out of range");
            }
            const auto e = codebook.entry(k);
            std::copy(e.begin(), e.end(), row.begin() + static_cast<std::ptrdiff_t>(b * dim));
        }
    }
    return out;
}

VectorQuantized vq_quantize(const Matrix& r, const Matrix& h, const VqOptions& options) {
    const std::size_t rows = r.rows();
    const std::size_t cols = r.cols();
    const std::size_t dim = options.dim;
    if (dim == 0 || cols % dim != 0) {
        throw std::invalid_argument("vq_quantize: vector dimension " + std::to_string(dim) + " does not divide " +
                                    std::to_string(cols) + " columns");
    }
    if (options.bits == 0 || options.bits * dim > kMaxCodebookBits) {
        throw std::invalid_argument("vq_quantize: codebook of 2^" + std::to_string(options.bits * dim) +
                                    " entries exceeds the 2^16 limit");
    }
    check_hessian(h, cols, "vq_quantize");
    const std::size_t entries = std::size_t{1} << (options.bits * dim);
    const std::size_t blocks = cols / dim;
    const std::size_t total = rows * blocks;
    if (total == 0) {
        throw std::invalid_argument("vq_quantize: empty matrix");
    }

    auto source = [&](std::size_t pos) { return r.row(pos / blocks).subspan((pos % blocks) * dim, dim); };

    // Seeded initialization from the data itself.
    GaussianSource rng(options.seed);
    std::vector<std::size_t> picks(entries);
    if (total >= entries) {
        std::vector<std::size_t> pool(total);
        std::iota(pool.begin(), pool.end(), 0);
        for (std::size_t k = 0; k < entries; ++k) {
            std::swap(pool[k], pool[k + rng.uniform_index(total - k)]);
            picks[k] = pool[k];
        }
    } else {
        for (auto& p : picks) {
            p = rng.uniform_index(total);
        }
    }
    Codebook cb{dim, std::vector<double>(entries * dim)};
    for (std::size_t k = 0; k < entries; ++k) {
        const auto v = source(picks[k]);
        std::copy(v.begin(), v.end(), cb.entries.begin() + static_cast<std::ptrdiff_t>(k * dim));
    }

    auto nearest = [&](std::span<const double> x, std::span<const double> weight) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < entries; ++k) {
            const double* c = cb.entries.data() + k * dim;
            double d = 0.0;
            for (std::size_t t = 0; t < dim; ++t) {
                const double diff = x[t] - c[t];
                d += (weight.empty() ? 1.0 : weight[t]) * diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        return best;
    };

    for (unsigned it = 0; it < options.lloyd_iters; ++it) {
        std::vector<double> sums(entries * dim, 0.0);
        std::vector<std::size_t> counts(entries, 0);
        for (std::size_t pos = 0; pos < total; ++pos) {
            const auto x = source(pos);
            const std::size_t k = nearest(x, {});
            ++counts[k];
            for (std::size_t t = 0; t < dim; ++t) {
                sums[k * dim + t] += x[t];
            }
        }
        for (std::size_t k = 0; k < entries; ++k) {
            if (counts[k] == 0) {
                continue;
            }
            for (std::size_t t = 0; t < dim; ++t) {
                cb.entries[k * dim + t] = sums[k * dim + t] / static_cast<double>(counts[k]);
            }
        }
    }
    for (auto& e : cb.entries) {
        e = float_round(e);
    }

    const InverseCholesky ic = damped_inverse_cholesky(h, options.damp);
    const Matrix& u = ic.upper;
    std::vector<double> weight(cols);
    const double damp_abs = [&] {
        CompensatedSum s;
        for (std::size_t i = 0; i < cols; ++i) {
            s.add(h(i, i) == 0.0 ? 1.0 : h(i, i));
        }
        return ic.damp_used * s.value() / static_cast<double>(cols);
    }();
    for (std::size_t j = 0; j < cols; ++j) {
        weight[j] = (h(j, j) == 0.0 ? 1.0 : h(j, j)) + damp_abs;
    }

    Matrix w = r;
    VectorQuantized out{std::vector<std::uint16_t>(total), {}, Matrix(rows, cols)};
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t j0 = b * dim;
        const std::span<const double> wblock(weight.data() + j0, dim);
        for (std::size_t i = 0; i < rows; ++i) {
            auto wrow = w.row(i);
            const std::size_t k = nearest(std::span<const double>(wrow).subspan(j0, dim), wblock);
            out.indices[i * blocks + b] = static_cast<std::uint16_t>(k);
            const auto c = cb.entry(k);
            for (std::size_t t = 0; t < dim; ++t) {
                const std::size_t j = j0 + t;
                out.dequantized(i, j) = c[t];
                const auto urow = u.row(j);
                const double err = (wrow[j] - c[t]) / urow[j];
                propagate(wrow, j, err, urow);
            }
        }
    }
    out.codebook = std::move(cb);
    out.damp_used = ic.damp_used;
    return out;
}

} // namespace lopro
