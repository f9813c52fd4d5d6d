#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tard/matrix.hpp"

namespace tard {

// Which feature columns are control variables (operator-set inputs) and which
// are sensor measurements (monitored signals, the reconstruction target).
// Indices refer to columns of the feature matrix; together they must cover
// every column exactly once.
struct FeaturePartition {
    std::vector<std::size_t> sensor_cols;
    std::vector<std::size_t> control_cols;

    std::size_t sensor_dim() const { return sensor_cols.size(); }
    std::size_t control_dim() const { return control_cols.size(); }
    std::size_t feature_dim() const { return sensor_cols.size() + control_cols.size(); }

    // Throws ConfigError if the partition does not cover [0, feature_dim)
    // exactly once or either side is empty.
    void validate(std::size_t total_cols) const;

    friend bool operator==(const FeaturePartition&, const FeaturePartition&) = default;
};

// A block of rows x features with its control/sensor column partition.
struct SampleBatch {
    Matrix values;  // rows x feature_dim
    FeaturePartition partition;

    std::size_t rows() const { return values.rows(); }
    Matrix sensors() const { return select_columns(values, partition.sensor_cols); }
    Matrix controls() const { return select_columns(values, partition.control_cols); }
};

// Per-column z-score transform fitted on healthy training rows.
struct Standardization {
    std::vector<double> mean;
    std::vector<double> stddev;  // zero-variance columns recorded as 1.0

    std::size_t dim() const { return mean.size(); }
    void apply(Matrix& m) const;
    void invert(Matrix& m) const;
    // Apply/invert for a column subset (e.g. de-standardize sensor predictions).
    void apply_columns(Matrix& m, std::span<const std::size_t> cols) const;
    void invert_columns(Matrix& m, std::span<const std::size_t> cols) const;

    friend bool operator==(const Standardization&, const Standardization&) = default;
};

Standardization compute_standardization(const Matrix& healthy_rows);

}  // namespace tard
