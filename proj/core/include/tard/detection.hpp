#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tard/models.hpp"
#include "tard/types.hpp"

namespace tard {

// Scoring parameters. sensor_scale and threshold_base come from the healthy
// target training+validation data; window/alpha from the run configuration.
struct ScoringConfig {
    std::vector<double> sensor_scale;  // per-sensor mean |value|, raw units, > 0
    double threshold_base = 0.0;       // mean smoothed healthy score
    std::size_t window = 10;
    double alpha = 1.0;
    ScoreMode score_mode = ScoreMode::MeanPlusMax;
};

ScoringConfig scoring_config_from(const ScoringStats& stats);

// Per-sensor mean absolute value of raw healthy data, floored at kScaleFloor
// (a warning is printed for floored columns).
std::vector<double> sensor_scale_from(const Matrix& raw_sensors);

inline constexpr double kScaleFloor = 1e-9;
inline constexpr double kThresholdFloor = 1e-9;

// r[i][j] = |pred[i][j] - actual[i][j]| / sensor_scale[j], raw units in,
// dimensionless out.
Matrix relative_residual(const Matrix& pred, const Matrix& actual, const ScoringConfig& cfg);

// Aggregate one residual row: mean over sensors plus max over sensors
// (MeanPlusMax) or mean plus sum (MeanPlusSum).
double anomaly_score(std::span<const double> residual_row, ScoreMode mode);
std::vector<double> anomaly_scores(const Matrix& residuals, ScoreMode mode);

// Forward-looking min window: out[i] = min(s[i..i+window-1]),
// length = len(s) - window + 1. The last window-1 samples have no score.
std::vector<double> smooth_scores(std::span<const double> scores, std::size_t window);

// y[i] = 1 iff smoothed[i] > alpha * threshold_base.
std::vector<std::uint8_t> detect(std::span<const double> smoothed, const ScoringConfig& cfg);

// Full Eval-mode scoring of one raw-unit contiguous series: standardize,
// predict (corrected when the bundle carries an adaptive module),
// de-standardize, Eqs. 2-3. Returns raw (unsmoothed) per-row scores.
std::vector<double> score_series_eval(const SampleBatch& raw_series, ModelBundle& bundle,
                                      ScoreMode mode);

// Mean smoothed anomaly score over healthy segments (Eval-mode inference),
// floored at kThresholdFloor. Every segment must be at least `window` long.
double compute_threshold_base(const std::vector<SampleBatch>& healthy_segments,
                              ModelBundle& bundle, std::size_t window, ScoreMode mode);

// One evaluated stream: raw scores, their smoothed values, thresholded labels
// and ground truth, aligned so index i covers the i-th smoothed sample.
struct ScoreTrace {
    std::vector<double> raw;        // raw score of row i
    std::vector<double> smoothed;   // min-window score starting at row i
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> truth;
    double threshold = 0.0;
};

// Delimited text: index,s_raw,s_smooth,threshold,label,truth
void write_trace(const ScoreTrace& trace, const std::filesystem::path& path);

}  // namespace tard
