#include "lopro/r1svd.hpp"

#include "lopro/numeric_formats.hpp"
#include "lopro/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lopro {

namespace {

constexpr int kMaxRedraws = 8;

std::vector<double> unit_vector(std::size_t n) {
    std::vector<double> e(n, 0.0);
    if (n > 0) {
        e[0] = 1.0;
    }
    return e;
}

bool normalize(std::vector<double>& v) {
    const double nrm = norm2(v);
    if (!(nrm > 0.0) || !std::isfinite(nrm)) {
        return false;
    }
    for (auto& x : v) {
        x /= nrm;
    }
    return true;
}

// Direction of (A A^T)^it A g; empty when the iterate collapses to zero.
std::vector<double> sketch_direction(const Matrix& a, std::span<const double> g, unsigned iterations) {
    std::vector<double> y = matvec(a, g);
    if (!normalize(y)) {
        return {};
    }
    for (unsigned p = 0; p < iterations; ++p) {
        y = matvec(a, matvec_transposed(a, y));
        if (!normalize(y)) {
            return {};
        }
    }
    return y;
}

// Rounds a unit vector to e4m3 so that the stored norm stays near 1. Each
// entry may take either grid value bracketing it; starting from the nearest
// ones, toggles are tried from the largest norm change down to the smallest
// and kept when they shrink the gap. Plain rounding drifts the norm by up to
// a few tenths of a percent.
std::vector<double> snap_unit(const std::vector<double>& v) {
    constexpr double kTolerance = 1e-4; // on |v|^2
    std::vector<double> r(v.size());
    CompensatedSum sq;
    for (std::size_t i = 0; i < v.size(); ++i) {
        r[i] = e4m3_round(v[i]);
        sq.add(r[i] * r[i]);
    }
    double n2 = sq.value();
    if (std::abs(n2 - 1.0) > kTolerance) {
        struct Toggle {
            double delta; // change of |r|^2
            std::size_t i;
            double to;
        };
        std::vector<Toggle> toggles;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (r[i] == v[i]) {
                continue;
            }
            // the other grid value on the far side of v[i]
            const std::uint8_t mag = e4m3_encode(std::abs(r[i]));
            const bool up = std::abs(v[i]) > std::abs(r[i]);
            if (up ? mag >= 0x7E : mag == 0) {
                continue;
            }
            const double to = std::copysign(e4m3_decode(static_cast<std::uint8_t>(up ? mag + 1 : mag - 1)), v[i]);
            toggles.push_back({to * to - r[i] * r[i], i, to});
        }
        std::stable_sort(toggles.begin(), toggles.end(),
                         [](const Toggle& x, const Toggle& y) { return std::abs(x.delta) > std::abs(y.delta); });
        const double start = n2;
        std::vector<double> greedy = r;
        for (const Toggle& t : toggles) {
            const double gap = 1.0 - n2;
            if (std::abs(gap) <= kTolerance) {
                break;
            }
            if (std::abs(gap - t.delta) < std::abs(gap)) {
                greedy[t.i] = t.to;
                n2 += t.delta;
            }
        }
        constexpr std::size_t kExhaustiveMax = 16;
        if (std::abs(1.0 - n2) > kTolerance && toggles.size() <= kExhaustiveMax) {
            // short vectors: try every subset of toggles, Gray-code order
            const double target = 1.0 - start;
            double sum = 0.0;
            double best = std::abs(target - (n2 - start));
            std::uint32_t mask = 0;
            std::uint32_t best_mask = 0;
            bool found = false;
            for (std::uint32_t k = 1; k < (1U << toggles.size()); ++k) {
                const unsigned bit = static_cast<unsigned>(__builtin_ctz(k));
                mask ^= 1U << bit;
                sum += (mask >> bit & 1U) ? toggles[bit].delta : -toggles[bit].delta;
                const double d = std::abs(target - sum);
                if (d < best) {
                    best = d;
                    best_mask = mask;
                    found = true;
                }
            }
            if (found) {
                for (std::size_t b = 0; b < toggles.size(); ++b) {
                    if (best_mask >> b & 1U) {
                        r[toggles[b].i] = toggles[b].to;
                    }
                }
                greedy = std::move(r);
            }
        }
        r = std::move(greedy);
    }
    return r;
}

double squared_norm_gap(const std::vector<double>& r) {
    CompensatedSum sq;
    for (double x : r) {
        sq.add(x * x);
    }
    return std::abs(sq.value() - 1.0);
}

// Stores a unit vector at precision p and returns the factor c it was scaled
// by (sigma must absorb 1/c). c = 1 unless the grid around v cannot reach unit
// norm, typically short vectors or ones dominated by a single entry; then c is
// scanned outward from 1 in steps of 1/1024, up to 1/8 either way.
double store_unit(std::vector<double>& v, FactorPrecision p) {
    if (p != FactorPrecision::e4m3) {
        return 1.0;
    }
    constexpr double kAccept = 1e-3; // on |v|^2
    constexpr int kScanSteps = 128;
    std::vector<double> best = snap_unit(v);
    double best_gap = squared_norm_gap(best);
    double best_c = 1.0;
    std::vector<double> scaled(v.size());
    for (int k = 1; k <= kScanSteps && best_gap > kAccept; ++k) {
        for (const int sk : {k, -k}) {
            const double c = 1.0 + static_cast<double>(sk) / 1024.0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                scaled[i] = c * v[i];
            }
            auto r = snap_unit(scaled);
            const double gap = squared_norm_gap(r);
            if (gap < best_gap) {
                best = std::move(r);
                best_gap = gap;
                best_c = c;
            }
        }
    }
    v = std::move(best);
    return best_c;
}

} // namespace

std::string_view to_string(FactorPrecision p) noexcept { return p == FactorPrecision::e4m3 ? "e4m3" : "full"; }

FactorPrecision parse_factor_precision(std::string_view s) {
    if (s == "e4m3") {
        return FactorPrecision::e4m3;
    }
    if (s == "full") {
        return FactorPrecision::full;
    }
    throw std::invalid_argument("unknown factor precision '" + std::string(s) + "' (expected full or e4m3)");
}

RankOneComponent r1svd_step(const Matrix& a, unsigned iterations, std::uint64_t seed) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (m == 0 || n == 0) {
        throw std::invalid_argument("r1svd_step: empty matrix");
    }
    if (frobenius_norm(a) == 0.0) {
        return {unit_vector(m), 0.0, unit_vector(n)};
    }

    std::vector<double> u;
    for (int attempt = 0; attempt <= kMaxRedraws && u.empty(); ++attempt) {
        GaussianSource rng(seed + static_cast<std::uint64_t>(attempt));
        const auto g = rng.normal_vector(n);
        u = sketch_direction(a, g, iterations);
    }
    if (u.empty()) {
        throw std::runtime_error("r1svd_step: sketch fell in the null space after " + std::to_string(kMaxRedraws) +
                                 " redraws");
    }

    std::vector<double> b = matvec_transposed(a, u);
    const double sigma = norm2(b);
    if (!normalize(b)) {
        return {std::move(u), 0.0, unit_vector(n)};
    }
    return {std::move(u), sigma, std::move(b)};
}

LowRankFactors r1svd_decompose(const Matrix& a, std::size_t rank, unsigned iterations, FactorPrecision precision,
                               std::uint64_t seed) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (rank > std::min(m, n)) {
        throw std::invalid_argument("r1svd_decompose: rank " + std::to_string(rank) + " exceeds min(m, n) = " +
                                    std::to_string(std::min(m, n)));
    }
    LowRankFactors f{Matrix(m, rank), std::vector<double>(rank), Matrix(rank, n), precision};
    Matrix work = a;
    for (std::size_t k = 0; k < rank; ++k) {
        RankOneComponent c = r1svd_step(work, iterations, seed + k);
        const double cu = store_unit(c.u, precision);
        const double cv = store_unit(c.v, precision);
        c.sigma /= cu * cv;
        for (std::size_t i = 0; i < m; ++i) {
            f.u(i, k) = c.u[i];
            const double su = c.sigma * c.u[i];
            auto row = work.row(i);
            for (std::size_t j = 0; j < n; ++j) {
                row[j] -= su * c.v[j];
            }
        }
        std::copy(c.v.begin(), c.v.end(), f.v.row(k).begin());
        f.s[k] = c.sigma;
    }
    return f;
}

Matrix unscaled_v(const LowRankFactors& f, std::span<const double> scale) {
    if (scale.size() != f.v.cols()) {
        throw std::invalid_argument("unscaled_v: scale length " + std::to_string(scale.size()) + " != " +
                                    std::to_string(f.v.cols()));
    }
    Matrix v = f.v;
    for (std::size_t k = 0; k < v.rows(); ++k) {
        auto row = v.row(k);
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] /= scale[j];
        }
    }
    return v;
}

Matrix low_rank_product(const LowRankFactors& f, std::span<const double> scale) {
    const Matrix v = scale.empty() ? f.v : unscaled_v(f, scale);
    Matrix out(f.u.rows(), v.cols());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto row = out.row(i);
        for (std::size_t k = 0; k < f.rank(); ++k) {
            const double coef = f.u(i, k) * f.s[k];
            const auto vk = v.row(k);
            for (std::size_t j = 0; j < row.size(); ++j) {
                row[j] += coef * vk[j];
            }
        }
    }
    return out;
}

ScaledDecomposition scaled_decompose(const Matrix& w, std::span<const double> scale, std::size_t rank,
                                     unsigned iterations, FactorPrecision precision, std::uint64_t seed) {
    if (scale.size() != w.cols()) {
        throw std::invalid_argument("scaled_decompose: scale length " + std::to_string(scale.size()) +
                                    " != weight columns " + std::to_string(w.cols()));
    }
    Matrix ws = w;
    for (std::size_t i = 0; i < ws.rows(); ++i) {
        auto row = ws.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] *= scale[j];
        }
    }
    LowRankFactors f = r1svd_decompose(ws, rank, iterations, precision, seed);
    for (auto& s : f.s) {
        s = float_round(s);
    }
    Matrix residual = w - low_rank_product(f, scale);
    return {std::move(f), std::move(residual)};
}

} // namespace lopro
