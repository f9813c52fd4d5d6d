#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace tard {

// Dense row-major matrix of doubles. Sized for the small fixed architectures
// used here (feature dims of a few dozen), so no blocking/vectorization
// tricks — plain loops are fast enough and keep results reproducible.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::initializer_list<std::initializer_list<double>> init);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool all_finite() const;
    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// out = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// out = a^T * b
Matrix matmul_at(const Matrix& a, const Matrix& b);
// out = a * b^T
Matrix matmul_bt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Column-wise statistics over rows.
std::vector<double> column_mean(const Matrix& m);
// Biased (population) variance, matching batch-norm training semantics.
std::vector<double> column_var(const Matrix& m, const std::vector<double>& mean);
std::vector<double> column_sum(const Matrix& m);

// New matrix from a column subset, in the given order.
Matrix select_columns(const Matrix& m, std::span<const std::size_t> cols);
// New matrix from the half-open row range [begin, end).
Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end);
// New matrix from the listed rows, in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);
// Stack b under a (must agree on cols).
Matrix vstack(const Matrix& a, const Matrix& b);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);

}  // namespace tard
