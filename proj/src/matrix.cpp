#include "lopro/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lopro {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
    }
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) + " does not match " +
                                    std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

Matrix Matrix::from_external(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (rows == 0 || cols == 0) {
        throw std::invalid_argument("Matrix: external tensors must have positive extents");
    }
    Matrix m(rows, cols, std::move(data));
    if (!all_finite(m.values())) {
        throw std::invalid_argument("Matrix: external data contains NaN or Inf");
    }
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw std::invalid_argument("Matrix::from_rows: ragged rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) {
        m(i, i) = diag[i];
    }
    return m;
}

std::vector<double> Matrix::column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        out[r] = (*this)(r, c);
    }
    return out;
}

std::vector<double> Matrix::diag() const {
    const std::size_t k = std::min(rows_, cols_);
    std::vector<double> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = (*this)(i, i);
    }
    return out;
}

PermutationIndex::PermutationIndex(std::vector<std::uint32_t> indices) : indices_(std::move(indices)) {
    std::vector<bool> seen(indices_.size(), false);
    for (auto idx : indices_) {
        if (idx >= indices_.size() || seen[idx]) {
            throw std::invalid_argument("PermutationIndex: not a bijection on {0.." +
                                        std::to_string(indices_.size()) + "-1}");
        }
        seen[idx] = true;
    }
}

PermutationIndex PermutationIndex::identity(std::size_t n) {
    std::vector<std::uint32_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = static_cast<std::uint32_t>(i);
    }
    return PermutationIndex(std::move(idx));
}

bool PermutationIndex::is_identity() const noexcept {
    for (std::size_t i = 0; i < indices_.size(); ++i) {
        if (indices_[i] != i) {
            return false;
        }
    }
    return true;
}

PermutationIndex PermutationIndex::inverse() const {
    std::vector<std::uint32_t> inv(indices_.size());
    for (std::size_t j = 0; j < indices_.size(); ++j) {
        inv[indices_[j]] = static_cast<std::uint32_t>(j);
    }
    return PermutationIndex(std::move(inv));
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + ")");
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            const auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out[j] += aik * brow[j];
            }
        }
    }
    return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator+");
    Matrix c = a;
    auto cv = c.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < cv.size(); ++i) {
        cv[i] += bv[i];
    }
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator-");
    Matrix c = a;
    auto cv = c.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < cv.size(); ++i) {
        cv[i] -= bv[i];
    }
    return c;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix c = a;
    for (auto& x : c.values()) {
        x *= s;
    }
    return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> v) {
    if (v.size() != a.cols()) {
        throw std::invalid_argument("matvec: vector length " + std::to_string(v.size()) + " != cols " +
                                    std::to_string(a.cols()));
    }
    std::vector<double> y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto row = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            acc += row[j] * v[j];
        }
        y[i] = acc;
    }
    return y;
}

std::vector<double> matvec_transposed(const Matrix& a, std::span<const double> v) {
    if (v.size() != a.rows()) {
        throw std::invalid_argument("matvec_transposed: vector length " + std::to_string(v.size()) + " != rows " +
                                    std::to_string(a.rows()));
    }
    std::vector<double> y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double vi = v[i];
        if (vi == 0.0) {
            continue;
        }
        const auto row = a.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            y[j] += vi * row[j];
        }
    }
    return y;
}

void CompensatedSum::add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
        comp_ += (sum_ - t) + x;
    } else {
        comp_ += (x - t) + sum_;
    }
    sum_ = t;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("dot: length mismatch");
    }
    CompensatedSum s;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s.add(a[i] * b[i]);
    }
    return s.value();
}

double norm2(std::span<const double> v) {
    CompensatedSum s;
    for (double x : v) {
        s.add(x * x);
    }
    return std::sqrt(s.value());
}

double frobenius_norm(const Matrix& a) { return norm2(a.values()); }

double trace(const Matrix& a) {
    CompensatedSum s;
    for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) {
        s.add(a(i, i));
    }
    return s.value();
}

bool all_finite(std::span<const double> v) noexcept {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double relative_error(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "relative_error");
    const double denom = std::max(frobenius_norm(b), std::numeric_limits<double>::min());
    return frobenius_norm(a - b) / denom;
}

std::vector<double> gram_apply(const Matrix& a, std::span<const double> v, unsigned power) {
    if (v.size() != a.cols()) {
        throw std::invalid_argument("gram_apply: vector length " + std::to_string(v.size()) + " != cols " +
                                    std::to_string(a.cols()));
    }
    std::vector<double> y = matvec(a, v);
    for (unsigned p = 0; p < power; ++p) {
        y = matvec(a, matvec_transposed(a, y));
    }
    return y;
}

} // namespace lopro
