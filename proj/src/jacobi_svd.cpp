#include "lopro/jacobi_svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lopro {

namespace {

using Columns = std::vector<std::vector<double>>;

double plain_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

// Replace near-null columns (flagged) by unit vectors orthogonal to the rest.
void complete_orthonormal(Columns& cols, const std::vector<bool>& valid) {
    const std::size_t m = cols.empty() ? 0 : cols.front().size();
    std::size_t candidate = 0;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (valid[j]) {
            continue;
        }
        while (candidate < m) {
            std::vector<double> e(m, 0.0);
            e[candidate++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t k = 0; k < cols.size(); ++k) {
                    if (k == j || (!valid[k] && k > j)) {
                        continue;
                    }
                    const double proj = plain_dot(e, cols[k]);
                    for (std::size_t i = 0; i < m; ++i) {
                        e[i] -= proj * cols[k][i];
                    }
                }
            }
            const double nrm = std::sqrt(plain_dot(e, e));
            if (nrm > 1e-8) {
                for (auto& x : e) {
                    x /= nrm;
                }
                cols[j] = std::move(e);
                break;
            }
        }
    }
}

// Requires m >= n; cols holds the n columns of A (each of length m).
SvdResult jacobi_tall(Columns cols, std::size_t m) {
    const std::size_t n = cols.size();
    Columns v(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        v[j][j] = 1.0;
    }

    const double eps = std::numeric_limits<double>::epsilon();
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = plain_dot(cols[p], cols[p]);
                const double beta = plain_dot(cols[q], cols[q]);
                const double gamma = plain_dot(cols[p], cols[q]);
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double up = cols[p][i];
                    const double uq = cols[q][i];
                    cols[p][i] = c * up - s * uq;
                    cols[q][i] = s * up + c * uq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v[p][i];
                    const double vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) {
            break;
        }
    }

    std::vector<double> sigma(n);
    double sigma_max = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        sigma[j] = std::sqrt(plain_dot(cols[j], cols[j]));
        sigma_max = std::max(sigma_max, sigma[j]);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    Columns u_sorted(n);
    Columns v_sorted(n);
    std::vector<double> s_sorted(n);
    std::vector<bool> valid(n);
    const double cutoff = sigma_max * static_cast<double>(std::max(m, n)) * eps;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        s_sorted[k] = sigma[j];
        v_sorted[k] = v[j];
        u_sorted[k] = cols[j];
        valid[k] = sigma[j] > cutoff && sigma[j] > 0.0;
        if (valid[k]) {
            for (auto& x : u_sorted[k]) {
                x /= sigma[j];
            }
        }
    }
    complete_orthonormal(u_sorted, valid);

    SvdResult out{Matrix(m, n), std::move(s_sorted), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < m; ++i) {
            out.u(i, k) = u_sorted[k][i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            out.v(i, k) = v_sorted[k][i];
        }
    }
    return out;
}

} // namespace

SvdResult exact_svd_small(const Matrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (std::min(m, n) > kExactSvdMaxDim) {
        throw std::invalid_argument("exact_svd_small: min(rows, cols) = " + std::to_string(std::min(m, n)) +
                                    " exceeds the oracle cap of " + std::to_string(kExactSvdMaxDim));
    }
    if (m >= n) {
        Columns cols(n, std::vector<double>(m));
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                cols[j][i] = a(i, j);
            }
        }
        return jacobi_tall(std::move(cols), m);
    }
    // Wide: factor A^T = U' S V'^T, then A = V' S U'^T.
    Columns cols(m, std::vector<double>(n));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            cols[i][j] = a(i, j);
        }
    }
    SvdResult t = jacobi_tall(std::move(cols), n);
    return SvdResult{std::move(t.v), std::move(t.s), std::move(t.u)};
}

double truncated_svd_error(const std::vector<double>& singular_values, std::size_t k) {
    CompensatedSum s;
    for (std::size_t i = k; i < singular_values.size(); ++i) {
        s.add(singular_values[i] * singular_values[i]);
    }
    return std::sqrt(s.value());
}

} // namespace lopro
