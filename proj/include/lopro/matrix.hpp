#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace lopro {

/// Dense row-major matrix of 64-bit reals.
///
/// Zero-extent matrices are allowed so that rank-0 factors have a natural
/// representation; anything read from an external source goes through
/// `from_external`, which rejects non-finite entries.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_external(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix diagonal(std::span<const double> diag);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    [[nodiscard]] std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    [[nodiscard]] std::span<double> values() noexcept { return data_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& storage() const noexcept { return data_; }

    [[nodiscard]] std::vector<double> column(std::size_t c) const;
    [[nodiscard]] std::vector<double> diag() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Column reordering stored as a gather index: position j of the permuted
/// matrix holds original column `indices[j]`.
class PermutationIndex {
public:
    PermutationIndex() = default;
    explicit PermutationIndex(std::vector<std::uint32_t> indices);

    static PermutationIndex identity(std::size_t n);

    [[nodiscard]] std::size_t size() const noexcept { return indices_.size(); }
    [[nodiscard]] std::uint32_t operator[](std::size_t j) const noexcept { return indices_[j]; }
    [[nodiscard]] const std::vector<std::uint32_t>& indices() const noexcept { return indices_; }
    [[nodiscard]] bool is_identity() const noexcept;
    [[nodiscard]] PermutationIndex inverse() const;

    bool operator==(const PermutationIndex&) const = default;

private:
    std::vector<std::uint32_t> indices_;
};

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

/// y = A v
std::vector<double> matvec(const Matrix& a, std::span<const double> v);
/// y = A^T v
std::vector<double> matvec_transposed(const Matrix& a, std::span<const double> v);

/// Neumaier-compensated accumulator.
class CompensatedSum {
public:
    void add(double x) noexcept;
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

double dot(std::span<const double> a, std::span<const double> b);
/// Euclidean norm with compensated accumulation of the squares.
double norm2(std::span<const double> v);
double frobenius_norm(const Matrix& a);
double trace(const Matrix& a);
bool all_finite(std::span<const double> v) noexcept;

/// Relative Frobenius distance ||a - b|| / max(||b||, tiny).
double relative_error(const Matrix& a, const Matrix& b);

/// (A A^T)^power A v using 2*power+1 matrix-vector products.
std::vector<double> gram_apply(const Matrix& a, std::span<const double> v, unsigned power);

} // namespace lopro
