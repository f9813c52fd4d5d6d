#include "tard/detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "tard/errors.hpp"

namespace tard {

ScoringConfig scoring_config_from(const ScoringStats& stats) {
    ScoringConfig cfg;
    cfg.sensor_scale = stats.sensor_scale;
    cfg.threshold_base = stats.threshold_base;
    cfg.window = stats.window;
    cfg.alpha = stats.alpha;
    cfg.score_mode = stats.score_mode;
    return cfg;
}

std::vector<double> sensor_scale_from(const Matrix& raw_sensors) {
    if (raw_sensors.rows() == 0) {
        throw ConfigError("sensor_scale_from: no rows");
    }
    std::vector<double> scale(raw_sensors.cols(), 0.0);
    for (std::size_t i = 0; i < raw_sensors.rows(); ++i) {
        const auto row = raw_sensors.row(i);
        for (std::size_t j = 0; j < raw_sensors.cols(); ++j) {
            scale[j] += std::abs(row[j]);
        }
    }
    for (std::size_t j = 0; j < scale.size(); ++j) {
        scale[j] /= static_cast<double>(raw_sensors.rows());
        if (scale[j] < kScaleFloor) {
            std::cerr << "warning: sensor " << j << " has near-zero mean level; flooring scale to "
                      << kScaleFloor << "\n";
            scale[j] = kScaleFloor;
        }
    }
    return scale;
}

Matrix relative_residual(const Matrix& pred, const Matrix& actual, const ScoringConfig& cfg) {
    if (!pred.same_shape(actual)) {
        throw ConfigError("relative_residual: prediction/actual shape mismatch");
    }
    if (pred.cols() != cfg.sensor_scale.size()) {
        throw ConfigError("relative_residual: expected " +
                          std::to_string(cfg.sensor_scale.size()) + " sensors, got " +
                          std::to_string(pred.cols()));
    }
    Matrix r(pred.rows(), pred.cols());
    for (std::size_t i = 0; i < pred.rows(); ++i) {
        const auto p = pred.row(i);
        const auto a = actual.row(i);
        auto out = r.row(i);
        for (std::size_t j = 0; j < pred.cols(); ++j) {
            const double scale = std::max(cfg.sensor_scale[j], kScaleFloor);
            out[j] = std::abs(p[j] - a[j]) / scale;
        }
    }
    return r;
}

double anomaly_score(std::span<const double> residual_row, ScoreMode mode) {
    if (residual_row.empty()) {
        throw ConfigError("anomaly_score: empty residual row");
    }
    double sum = 0.0;
    double mx = residual_row[0];
    for (double v : residual_row) {
        sum += v;
        mx = std::max(mx, v);
    }
    const double mean = sum / static_cast<double>(residual_row.size());
    return mode == ScoreMode::MeanPlusMax ? mean + mx : mean + sum;
}

std::vector<double> anomaly_scores(const Matrix& residuals, ScoreMode mode) {
    std::vector<double> s(residuals.rows());
    for (std::size_t i = 0; i < residuals.rows(); ++i) {
        s[i] = anomaly_score(residuals.row(i), mode);
    }
    return s;
}

std::vector<double> smooth_scores(std::span<const double> scores, std::size_t window) {
    if (window < 1) {
        throw ConfigError("smooth_scores: window must be >= 1");
    }
    if (scores.size() < window) {
        throw UsageError("smooth_scores: series of " + std::to_string(scores.size()) +
                         " is shorter than window " + std::to_string(window));
    }
    std::vector<double> out(scores.size() - window + 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double mn = scores[i];
        for (std::size_t q = 1; q < window; ++q) {
            mn = std::min(mn, scores[i + q]);
        }
        out[i] = mn;
    }
    return out;
}

std::vector<std::uint8_t> detect(std::span<const double> smoothed, const ScoringConfig& cfg) {
    const double threshold = cfg.alpha * cfg.threshold_base;
    std::vector<std::uint8_t> labels(smoothed.size());
    for (std::size_t i = 0; i < smoothed.size(); ++i) {
        labels[i] = smoothed[i] > threshold ? 1 : 0;
    }
    return labels;
}

std::vector<double> score_series_eval(const SampleBatch& raw_series, ModelBundle& bundle,
                                      ScoreMode mode) {
    bundle.ae.set_bn_mode(BatchNormMode::Eval);
    if (bundle.adaptive) bundle.adaptive->set_bn_mode(BatchNormMode::Eval);

    SampleBatch standardized = raw_series;
    bundle.standardization.apply(standardized.values);

    Matrix pred = bundle.adaptive ? corrected_predict(standardized, bundle)
                                  : ae_predict(standardized, bundle.ae);
    bundle.standardization.invert_columns(pred, bundle.partition.sensor_cols);

    ScoringConfig cfg = scoring_config_from(bundle.scoring);
    const Matrix residual = relative_residual(pred, raw_series.sensors(), cfg);
    return anomaly_scores(residual, mode);
}

double compute_threshold_base(const std::vector<SampleBatch>& healthy_segments,
                              ModelBundle& bundle, std::size_t window, ScoreMode mode) {
    if (healthy_segments.empty()) {
        throw ConfigError("compute_threshold_base: no healthy segments");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& segment : healthy_segments) {
        if (segment.rows() == 0) {
            throw ConfigError("compute_threshold_base: empty segment");
        }
        const std::vector<double> scores = score_series_eval(segment, bundle, mode);
        const std::vector<double> smoothed = smooth_scores(scores, window);
        for (double s : smoothed) sum += s;
        count += smoothed.size();
    }
    const double mean = sum / static_cast<double>(count);
    return std::max(mean, kThresholdFloor);
}

void write_trace(const ScoreTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw ParseError("trace: cannot open '" + path.string() + "' for writing");
    }
    out << "index,s_raw,s_smooth,threshold,label,truth\n";
    char buf[512];
    for (std::size_t i = 0; i < trace.smoothed.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%d,%d\n", i, trace.raw[i],
                      trace.smoothed[i], trace.threshold, static_cast<int>(trace.labels[i]),
                      static_cast<int>(trace.truth[i]));
        out << buf;
    }
}

}  // namespace tard
