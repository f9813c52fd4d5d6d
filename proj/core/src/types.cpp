#include "tard/types.hpp"

#include <cmath>

#include "tard/errors.hpp"

namespace tard {

void FeaturePartition::validate(std::size_t total_cols) const {
    if (sensor_cols.empty() || control_cols.empty()) {
        throw ConfigError("feature partition needs at least one sensor and one control column");
    }
    if (feature_dim() != total_cols) {
        throw ConfigError("feature partition covers " + std::to_string(feature_dim()) +
                          " columns, data has " + std::to_string(total_cols));
    }
    std::vector<std::uint8_t> seen(total_cols, 0);
    auto mark = [&](const std::vector<std::size_t>& idx, const char* what) {
        for (std::size_t c : idx) {
            if (c >= total_cols) {
                throw ConfigError(std::string(what) + " column index " + std::to_string(c) +
                                  " out of range");
            }
            if (seen[c]++) {
                throw ConfigError("column " + std::to_string(c) +
                                  " assigned to more than one partition role");
            }
        }
    };
    mark(sensor_cols, "sensor");
    mark(control_cols, "control");
}

void Standardization::apply(Matrix& m) const {
    if (m.cols() != dim()) throw ConfigError("standardization: column count mismatch");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            row[j] = (row[j] - mean[j]) / stddev[j];
        }
    }
}

void Standardization::invert(Matrix& m) const {
    if (m.cols() != dim()) throw ConfigError("standardization: column count mismatch");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            row[j] = row[j] * stddev[j] + mean[j];
        }
    }
}

void Standardization::apply_columns(Matrix& m, std::span<const std::size_t> cols) const {
    if (m.cols() != cols.size()) throw ConfigError("standardization: column subset mismatch");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        for (std::size_t j = 0; j < cols.size(); ++j) {
            row[j] = (row[j] - mean[cols[j]]) / stddev[cols[j]];
        }
    }
}

void Standardization::invert_columns(Matrix& m, std::span<const std::size_t> cols) const {
    if (m.cols() != cols.size()) throw ConfigError("standardization: column subset mismatch");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        for (std::size_t j = 0; j < cols.size(); ++j) {
            row[j] = row[j] * stddev[cols[j]] + mean[cols[j]];
        }
    }
}

Standardization compute_standardization(const Matrix& healthy_rows) {
    if (healthy_rows.rows() == 0) {
        throw ConfigError("compute_standardization: no rows");
    }
    Standardization s;
    s.mean = column_mean(healthy_rows);
    std::vector<double> var = column_var(healthy_rows, s.mean);
    s.stddev.resize(var.size());
    for (std::size_t j = 0; j < var.size(); ++j) {
        const double sd = std::sqrt(var[j]);
        // Constant columns map to zero instead of dividing by zero.
        s.stddev[j] = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

}  // namespace tard
