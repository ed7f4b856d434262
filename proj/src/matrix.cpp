#include "complora/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "complora/errors.hpp"

namespace complora {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(rows, cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
    Matrix m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return m;
}

Matrix Matrix::column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

std::vector<double> Matrix::col(std::size_t j) const {
    std::vector<double> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
}

void Matrix::set_col(std::size_t j, std::span<const double> values) {
    if (values.size() != rows_) throw ShapeError("set_col length mismatch");
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = values[i];
}

Matrix Matrix::row_block(std::size_t first, std::size_t count) const {
    if (first + count > rows_) throw RangeError("row block out of range");
    return Matrix(count, cols_,
                  std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_),
                                      data_.begin() + static_cast<std::ptrdiff_t>((first + count) * cols_)));
}

Matrix Matrix::col_block(std::size_t first, std::size_t count) const {
    if (first + count > cols_) throw RangeError("column block out of range");
    Matrix out(rows_, count);
    for (std::size_t i = 0; i < rows_; ++i) {
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(i * cols_ + first), count, out.row(i).begin());
    }
    return out;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) {
        throw ShapeError("cannot add " + shape_str(rows_, cols_) + " and " + shape_str(other.rows_, other.cols_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) {
        throw ShapeError("cannot subtract " + shape_str(other.rows_, other.cols_) + " from " +
                         shape_str(rows_, cols_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul shape mismatch: " + shape_str(a.rows(), a.cols()) + " * " +
                         shape_str(b.rows(), b.cols()));
    }
    const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
    Matrix c(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = c.row(i).data();
        const double* arow = a.row(i).data();
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = arow[k];
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_bt shape mismatch: " + shape_str(a.rows(), a.cols()) + " * (" +
                         shape_str(b.rows(), b.cols()) + ")^T");
    }
    return matmul(a, b.transpose());
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_at shape mismatch: (" + shape_str(a.rows(), a.cols()) + ")^T * " +
                         shape_str(b.rows(), b.cols()));
    }
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* arow = a.row(k).data();
        const double* brow = b.row(k).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = arow[i];
            double* crow = c.row(i).data();
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

Matrix scaled_outer(const Matrix& a, std::span<const double> d, const Matrix& b) {
    if (a.cols() != d.size() || b.cols() != d.size()) {
        throw ShapeError("scaled_outer shape mismatch: " + shape_str(a.rows(), a.cols()) + ", " +
                         std::to_string(d.size()) + " values, " + shape_str(b.rows(), b.cols()));
    }
    Matrix scaled = a;
    for (std::size_t i = 0; i < scaled.rows(); ++i)
        for (std::size_t j = 0; j < d.size(); ++j) scaled(i, j) *= d[j];
    return matmul_bt(scaled, b);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double frobenius_norm(const Matrix& m) { return norm2(m.data()); }

double max_abs(const Matrix& m) {
    double best = 0.0;
    for (double x : m.data()) best = std::max(best, std::abs(x));
    return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("cannot compare " + shape_str(a.rows(), a.cols()) + " with " + shape_str(b.rows(), b.cols()));
    }
    double best = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) best = std::max(best, std::abs(a.data()[i] - b.data()[i]));
    return best;
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double x) { return std::isfinite(x); });
}

void require_finite(const Matrix& m, const char* what) {
    if (!all_finite(m)) throw NumericError(std::string(what) + " contains non-finite entries");
}

}  // namespace complora
