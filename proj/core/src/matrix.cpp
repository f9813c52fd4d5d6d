#include "tard/matrix.hpp"

#include <cmath>

#include "tard/errors.hpp"

namespace tard {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
        if (row.size() != cols_) {
            throw ConfigError("Matrix initializer rows have inconsistent lengths");
        }
        data_.insert(data_.end(), row.begin(), row.end());
    }
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ConfigError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
                          " vs " + std::to_string(b.rows()) + ")");
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const auto brow = b.row(k);
            auto orow = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ConfigError("matmul_at: row counts disagree");
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto arow = a.row(i);
        const auto brow = b.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            auto orow = out.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ConfigError("matmul_bt: column counts disagree");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto arow = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto brow = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += arow[k] * brow[k];
            }
            out(i, j) = acc;
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

std::vector<double> column_mean(const Matrix& m) {
    std::vector<double> mean(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) mean[j] += row[j];
    }
    const double inv = m.rows() ? 1.0 / static_cast<double>(m.rows()) : 0.0;
    for (double& v : mean) v *= inv;
    return mean;
}

std::vector<double> column_var(const Matrix& m, const std::vector<double>& mean) {
    std::vector<double> var(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    const double inv = m.rows() ? 1.0 / static_cast<double>(m.rows()) : 0.0;
    for (double& v : var) v *= inv;
    return var;
}

std::vector<double> column_sum(const Matrix& m) {
    std::vector<double> sum(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) sum[j] += row[j];
    }
    return sum;
}

Matrix select_columns(const Matrix& m, std::span<const std::size_t> cols) {
    Matrix out(m.rows(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] >= m.cols()) {
            throw ConfigError("select_columns: index " + std::to_string(cols[j]) +
                              " out of range for " + std::to_string(m.cols()) + " columns");
        }
    }
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out(i, j) = m(i, cols[j]);
        }
    }
    return out;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
    if (begin > end || end > m.rows()) {
        throw ConfigError("slice_rows: bad range");
    }
    Matrix out(end - begin, m.cols());
    for (std::size_t i = begin; i < end; ++i) {
        const auto src = m.row(i);
        auto dst = out.row(i - begin);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows()) {
            throw ConfigError("gather_rows: index out of range");
        }
        const auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (a.cols() != b.cols()) {
        throw ConfigError("vstack: column counts disagree");
    }
    Matrix out(a.rows() + b.rows(), a.cols());
    std::copy(a.storage().begin(), a.storage().end(), out.storage().begin());
    std::copy(b.storage().begin(), b.storage().end(), out.storage().begin() + a.size());
    return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ConfigError("matrix +: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.storage()[i] += b.storage()[i];
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ConfigError("matrix -: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.storage()[i] -= b.storage()[i];
    return out;
}

}  // namespace tard
