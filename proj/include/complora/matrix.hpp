#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace complora {

/// Row-major dense matrix of doubles.
///
/// Zero-sized extents are allowed. Products with a zero inner dimension
/// yield zeros.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> values);
    static Matrix column(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    std::vector<double> col(std::size_t j) const;
    void set_col(std::size_t j, std::span<const double> values);

    /// Rows [first, first + count) as a new matrix.
    Matrix row_block(std::size_t first, std::size_t count) const;
    /// Columns [first, first + count) as a new matrix.
    Matrix col_block(std::size_t first, std::size_t count) const;

    Matrix transpose() const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// a * b. Throws ShapeError naming both shapes when a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
/// a^T * b without materializing a^T.
Matrix matmul_at(const Matrix& a, const Matrix& b);

/// a * diag(d) * b^T, the shape of every SVD reconstruction.
Matrix scaled_outer(const Matrix& a, std::span<const double> d, const Matrix& b);

double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

bool all_finite(const Matrix& m);
/// Throws NumericError when any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

}  // namespace complora
