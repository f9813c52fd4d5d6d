#include "tard/detection.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "tard/errors.hpp"
#include "testutil.hpp"

using namespace tard;
using testutil::random_matrix;

namespace {

// Straight-line re-implementation of the scoring chain, kept deliberately
// independent of the detection module (plain loops, no shared helpers).
struct OracleResult {
    std::vector<double> raw;
    std::vector<double> smoothed;
    std::vector<int> labels;
};

OracleResult oracle_chain(const Matrix& pred, const Matrix& actual,
                          const std::vector<double>& scale, std::size_t l, double alpha,
                          double rbar, bool mean_plus_max) {
    OracleResult out;
    const std::size_t n = pred.rows();
    const std::size_t k = pred.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        double mx = -1.0;
        for (std::size_t j = 0; j < k; ++j) {
            double r = std::fabs(pred(i, j) - actual(i, j)) / scale[j];
            sum += r;
            if (r > mx) mx = r;
        }
        out.raw.push_back(mean_plus_max ? sum / double(k) + mx : sum / double(k) + sum);
    }
    for (std::size_t i = 0; i + l <= n; ++i) {
        double mn = out.raw[i];
        for (std::size_t q = 1; q < l; ++q) mn = std::min(mn, out.raw[i + q]);
        out.smoothed.push_back(mn);
        out.labels.push_back(mn > alpha * rbar ? 1 : 0);
    }
    return out;
}

ScoringConfig config_with(std::vector<double> scale, double rbar, std::size_t l, double alpha,
                          ScoreMode mode = ScoreMode::MeanPlusMax) {
    ScoringConfig cfg;
    cfg.sensor_scale = std::move(scale);
    cfg.threshold_base = rbar;
    cfg.window = l;
    cfg.alpha = alpha;
    cfg.score_mode = mode;
    return cfg;
}

}  // namespace

TEST(RelativeResidual, IdenticalInputsAreZero) {
    std::mt19937_64 rng(1);
    const Matrix a = random_matrix(5, 3, rng);
    const auto cfg = config_with({1.0, 1.0, 1.0}, 1.0, 1, 1.0);
    const Matrix r = relative_residual(a, a, cfg);
    for (double v : r.storage()) EXPECT_EQ(v, 0.0);
}

TEST(RelativeResidual, DifferenceEqualToScaleGivesOnes) {
    const auto cfg = config_with({0.5, 2.0}, 1.0, 1, 1.0);
    Matrix actual{{1.0, 1.0}};
    Matrix pred{{1.5, 3.0}};
    const Matrix r = relative_residual(pred, actual, cfg);
    EXPECT_DOUBLE_EQ(r(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(r(0, 1), 1.0);
}

TEST(RelativeResidual, HandValues) {
    const auto cfg = config_with({1.0, 4.0}, 1.0, 1, 1.0);
    const Matrix r = relative_residual(Matrix{{0.5, 2.0}}, Matrix{{0.0, 0.0}}, cfg);
    EXPECT_DOUBLE_EQ(r(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(r(0, 1), 0.5);
}

TEST(RelativeResidual, ShapeMismatchThrows) {
    const auto cfg = config_with({1.0}, 1.0, 1, 1.0);
    EXPECT_THROW(relative_residual(Matrix(2, 1), Matrix(3, 1), cfg), ConfigError);
}

TEST(AnomalyScore, Cases) {
    std::vector<double> zeros(4, 0.0);
    EXPECT_DOUBLE_EQ(anomaly_score(zeros, ScoreMode::MeanPlusMax), 0.0);

    std::vector<double> constant(5, 0.3);
    EXPECT_NEAR(anomaly_score(constant, ScoreMode::MeanPlusMax), 0.6, 1e-15);

    std::vector<double> two = {0.1, 0.3};
    EXPECT_NEAR(anomaly_score(two, ScoreMode::MeanPlusMax), 0.5, 1e-15);
    // Literal sum-based variant: mean + sum.
    EXPECT_NEAR(anomaly_score(two, ScoreMode::MeanPlusSum), 0.2 + 0.4, 1e-15);
}

TEST(AnomalyScore, MonotoneInEveryEntry) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 100; ++t) {
        Matrix r = random_matrix(1, 6, rng, 0.0, 2.0);
        const double base = anomaly_score(r.row(0), ScoreMode::MeanPlusMax);
        const std::size_t j = t % 6;
        r(0, j) += 0.5;
        EXPECT_GE(anomaly_score(r.row(0), ScoreMode::MeanPlusMax), base);
    }
}

TEST(SmoothScores, WindowOneIsIdentity) {
    const std::vector<double> s = {3.0, 1.0, 2.0};
    EXPECT_EQ(smooth_scores(s, 1), s);
}

TEST(SmoothScores, ConstantSeriesShortened) {
    const std::vector<double> s(10, 0.7);
    const auto out = smooth_scores(s, 4);
    EXPECT_EQ(out.size(), 7u);
    for (double v : out) EXPECT_EQ(v, 0.7);
}

TEST(SmoothScores, HandWindowedMin) {
    const std::vector<double> s = {1.0, 9.0, 1.0, 1.0};
    const auto out = smooth_scores(s, 2);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0], 1.0);
    EXPECT_EQ(out[1], 1.0);
    EXPECT_EQ(out[2], 1.0);
}

TEST(SmoothScores, ShortSeriesThrows) {
    const std::vector<double> s = {1.0, 2.0};
    EXPECT_THROW(smooth_scores(s, 3), UsageError);
}

TEST(SmoothScores, NeverExceedsPointwiseInput) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::vector<double> s(50);
    for (double& v : s) v = u(rng);
    const auto out = smooth_scores(s, 7);
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t q = 0; q < 7; ++q) {
            EXPECT_LE(out[i], s[i + q]);
        }
    }
}

TEST(Detect, Cases) {
    const auto cfg = config_with({1.0}, 0.5, 1, 1.0);
    const std::vector<double> below = {0.1, 0.2, 0.49};
    for (auto v : detect(below, cfg)) EXPECT_EQ(v, 0);

    const std::vector<double> hand = {0.4, 1.2};
    const auto labels = detect(hand, cfg);
    EXPECT_EQ(labels[0], 0);
    EXPECT_EQ(labels[1], 1);

    auto tiny_alpha = config_with({1.0}, 0.5, 1, 1e-12);
    const std::vector<double> positive = {0.01, 0.2};
    for (auto v : detect(positive, tiny_alpha)) EXPECT_EQ(v, 1);
}

TEST(Detect, MonotoneInAlphaAndScaleConsistent) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::vector<double> s(200);
    for (double& v : s) v = u(rng);

    std::size_t prev_detections = s.size() + 1;
    for (double alpha : {0.25, 0.5, 1.0, 2.0, 4.0}) {
        const auto cfg = config_with({1.0}, 0.8, 1, alpha);
        const auto labels = detect(s, cfg);
        const std::size_t count = std::count(labels.begin(), labels.end(), std::uint8_t{1});
        EXPECT_LE(count, prev_detections);
        prev_detections = count;
    }

    // Scaling scores and threshold base together leaves labels unchanged.
    const auto cfg = config_with({1.0}, 0.8, 1, 1.3);
    const auto base_labels = detect(s, cfg);
    std::vector<double> scaled = s;
    for (double& v : scaled) v *= 37.5;
    const auto cfg_scaled = config_with({1.0}, 0.8 * 37.5, 1, 1.3);
    EXPECT_EQ(detect(scaled, cfg_scaled), base_labels);
}

TEST(ScoringOracle, FullChainAgreesOnRandomInstances) {
    std::mt19937_64 rng(20240818);
    std::uniform_int_distribution<std::size_t> rows(12, 40);
    std::uniform_int_distribution<std::size_t> cols(1, 8);
    std::uniform_int_distribution<std::size_t> window(1, 10);
    std::uniform_real_distribution<double> alpha_dist(0.2, 3.0);
    std::uniform_real_distribution<double> rbar_dist(0.01, 1.0);

    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = rows(rng);
        const std::size_t k = cols(rng);
        const std::size_t l = std::min(window(rng), n);
        const Matrix actual = random_matrix(n, k, rng, -5.0, 5.0);
        const Matrix pred = random_matrix(n, k, rng, -5.0, 5.0);
        std::vector<double> scale(k);
        std::uniform_real_distribution<double> sdist(0.1, 4.0);
        for (double& v : scale) v = sdist(rng);
        const double alpha = alpha_dist(rng);
        const double rbar = rbar_dist(rng);
        const bool mean_plus_max = t % 2 == 0;
        const ScoreMode mode = mean_plus_max ? ScoreMode::MeanPlusMax : ScoreMode::MeanPlusSum;

        const auto cfg = config_with(scale, rbar, l, alpha, mode);
        const Matrix residual = relative_residual(pred, actual, cfg);
        const auto raw = anomaly_scores(residual, mode);
        const auto smoothed = smooth_scores(raw, l);
        const auto labels = detect(smoothed, cfg);

        const OracleResult oracle = oracle_chain(pred, actual, scale, l, alpha, rbar,
                                                 mean_plus_max);
        ASSERT_EQ(raw.size(), oracle.raw.size());
        ASSERT_EQ(smoothed.size(), oracle.smoothed.size());
        for (std::size_t i = 0; i < raw.size(); ++i) {
            ASSERT_NEAR(raw[i], oracle.raw[i], 1e-12);
        }
        for (std::size_t i = 0; i < smoothed.size(); ++i) {
            ASSERT_NEAR(smoothed[i], oracle.smoothed[i], 1e-12);
            ASSERT_EQ(static_cast<int>(labels[i]), oracle.labels[i]);
        }
    }
}

TEST(ThresholdBase, DuplicatedValidationSetLeavesThresholdUnchanged) {
    // Mean invariance under duplication, checked at the score level.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> scores(40);
    for (double& v : scores) v = u(rng);

    const auto sm = smooth_scores(scores, 5);
    double mean_once = 0.0;
    for (double v : sm) mean_once += v;
    mean_once /= static_cast<double>(sm.size());

    double mean_twice = 0.0;
    for (int rep = 0; rep < 2; ++rep) {
        for (double v : sm) mean_twice += v;
    }
    mean_twice /= static_cast<double>(2 * sm.size());
    EXPECT_NEAR(mean_once, mean_twice, 1e-12);
}

TEST(ThresholdBase, HandMeanOfSmoothedSeries) {
    const std::vector<double> raw = {0.2, 0.6, 0.1, 0.4, 0.3};
    const std::size_t l = 2;
    const auto sm = smooth_scores(raw, l);  // {0.2, 0.1, 0.1, 0.3}
    ASSERT_EQ(sm.size(), 4u);
    double mean = 0.0;
    for (double v : sm) mean += v;
    mean /= 4.0;
    EXPECT_NEAR(mean, (0.2 + 0.1 + 0.1 + 0.3) / 4.0, 1e-15);
}

// End-to-end scoring oracle at the residual level: a sustained fault of
// amplitude >= 5x the healthy residual level is flagged, a clean stream of
// equal length is not. Checked over 20 seeds.
TEST(EndToEnd, SustainedFaultFlaggedCleanStreamSilent) {
    const std::size_t n = 600;
    const std::size_t l = 10;
    const std::size_t k = 4;
    const double healthy_level = 0.1;

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(900 + seed);
        std::uniform_real_distribution<double> noise(0.0, 2.0 * healthy_level);

        auto make_residuals = [&](bool with_fault) {
            Matrix r(n, k);
            for (double& v : r.storage()) v = noise(rng);
            if (with_fault) {
                for (std::size_t i = 300; i < 300 + 2 * l + 20; ++i) {
                    for (std::size_t j = 0; j < k; ++j) {
                        r(i, j) += 5.0 * healthy_level;
                    }
                }
            }
            return r;
        };

        const Matrix healthy = make_residuals(false);
        const Matrix faulty = make_residuals(true);

        // Threshold base from an independent healthy stretch.
        const Matrix val = make_residuals(false);
        const auto val_scores = anomaly_scores(val, ScoreMode::MeanPlusMax);
        const auto val_smoothed = smooth_scores(val_scores, l);
        double rbar = 0.0;
        for (double v : val_smoothed) rbar += v;
        rbar /= static_cast<double>(val_smoothed.size());

        const auto cfg = config_with(std::vector<double>(k, 1.0), rbar, l, 2.0);

        const auto clean_labels =
            detect(smooth_scores(anomaly_scores(healthy, ScoreMode::MeanPlusMax), l), cfg);
        EXPECT_EQ(std::count(clean_labels.begin(), clean_labels.end(), std::uint8_t{1}), 0)
            << "seed " << seed;

        const auto fault_labels =
            detect(smooth_scores(anomaly_scores(faulty, ScoreMode::MeanPlusMax), l), cfg);
        bool hit_inside = false;
        for (std::size_t i = 300 - l + 1; i < 300 + 2 * l + 20 && i < fault_labels.size(); ++i) {
            if (fault_labels[i]) hit_inside = true;
        }
        EXPECT_TRUE(hit_inside) << "seed " << seed;
    }
}

TEST(WriteTrace, ProducesAlignedRows) {
    ScoreTrace trace;
    trace.raw = {0.1, 0.2, 0.3};
    trace.smoothed = {0.1, 0.2, 0.3};
    trace.labels = {0, 0, 1};
    trace.truth = {0, 1, 1};
    trace.threshold = 0.25;
    const auto path = std::filesystem::temp_directory_path() / "tard_trace_test.csv";
    write_trace(trace, path);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "index,s_raw,s_smooth,threshold,label,truth");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 3u);
    std::filesystem::remove(path);
}
