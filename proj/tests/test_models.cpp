#include "tard/models.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "tard/adaptation.hpp"
#include "tard/data.hpp"
#include "tard/detection.hpp"
#include "tard/errors.hpp"
#include "testutil.hpp"

using namespace tard;
using testutil::random_matrix;

namespace {

SampleBatch synthetic_batch(std::size_t rows, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.system_seed = 11;
    cfg.stream_seed = seed;
    cfg.rows = rows;
    cfg.linear_map = true;
    cfg.noise_sigma = 0.1;
    return generate_synthetic(cfg).observed.batch;
}

ModelBundle tiny_bundle(bool with_adaptive) {
    std::mt19937_64 rng(5);
    ModelBundle b;
    b.ae = make_autoencoder(4, 2, rng);
    if (with_adaptive) {
        b.adaptive = make_adaptive_module(2, 4, OutputActivation::Relu, rng);
    }
    b.partition.sensor_cols = {0, 1, 2, 3};
    b.partition.control_cols = {4, 5};
    b.standardization.mean.assign(6, 0.0);
    b.standardization.stddev.assign(6, 1.0);
    b.scoring.sensor_scale.assign(4, 1.0);
    b.scoring.threshold_base = 0.1;
    b.seed = 5;
    return b;
}

}  // namespace

TEST(AePredict, ShapeContractOnUntrainedModel) {
    std::mt19937_64 rng(1);
    AutoencoderModel m = make_autoencoder(4, 2, rng);
    m.set_bn_mode(BatchNormMode::Eval);
    SampleBatch batch;
    batch.values = random_matrix(7, 6, rng);
    batch.partition.sensor_cols = {0, 1, 2, 3};
    batch.partition.control_cols = {4, 5};
    const Matrix pred = ae_predict(batch, m);
    EXPECT_EQ(pred.rows(), 7u);
    EXPECT_EQ(pred.cols(), 4u);
    EXPECT_TRUE(pred.all_finite());
}

TEST(AePredict, IdenticalRowsGiveIdenticalOutputsInEval) {
    std::mt19937_64 rng(2);
    AutoencoderModel m = make_autoencoder(3, 1, rng);
    m.set_bn_mode(BatchNormMode::Eval);
    Matrix values(4, 4);
    const Matrix row = random_matrix(1, 4, rng);
    for (std::size_t i = 0; i < 4; ++i) {
        std::copy(row.row(0).begin(), row.row(0).end(), values.row(i).begin());
    }
    SampleBatch batch{values, {{0, 1, 2}, {3}}};
    const Matrix pred = ae_predict(batch, m);
    for (std::size_t i = 1; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_EQ(pred(i, j), pred(0, j));
        }
    }
}

TEST(AePredict, DimensionMismatchThrows) {
    std::mt19937_64 rng(3);
    AutoencoderModel m = make_autoencoder(4, 2, rng);
    SampleBatch batch;
    batch.values = Matrix(3, 5);
    batch.partition.sensor_cols = {0, 1, 2, 3};
    batch.partition.control_cols = {4};
    EXPECT_THROW(ae_predict(batch, m), ConfigError);
}

TEST(AePredict, PretrainedOnSyntheticReconstructsHealthyData) {
    // Whole-model sanity check: after a short pretraining run on a linear
    // synthetic plant the standardized residuals are well under 0.1.
    const SampleBatch raw = synthetic_batch(1500, 21);
    const Standardization st = compute_standardization(raw.values);
    SampleBatch std_batch = raw;
    st.apply(std_batch.values);

    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.seed = 9;
    AutoencoderModel model = pretrain_source(std_batch, cfg);

    const Matrix pred = ae_forward(std_batch.values, model);
    const double mse = mse_loss(pred, std_batch.sensors());
    EXPECT_LT(mse, 0.01) << "standardized reconstruction MSE " << mse;
}

TEST(CorrectedPredict, ZeroWeightModuleMatchesAePredict) {
    ModelBundle b = tiny_bundle(true);
    for (double& v : b.adaptive->layer2.weight.storage()) v = 0.0;
    b.adaptive->layer2.bias.assign(4, 0.0);
    b.ae.set_bn_mode(BatchNormMode::Eval);
    b.adaptive->set_bn_mode(BatchNormMode::Eval);

    std::mt19937_64 rng(6);
    SampleBatch batch{random_matrix(5, 6, rng), b.partition};
    const Matrix base = ae_predict(batch, b.ae);
    const Matrix corrected = corrected_predict(batch, b);
    EXPECT_EQ(base, corrected);
}

TEST(CorrectedPredict, ReluOutputKeepsCorrectionNonNegative) {
    ModelBundle b = tiny_bundle(true);
    b.ae.set_bn_mode(BatchNormMode::Eval);
    b.adaptive->set_bn_mode(BatchNormMode::Eval);
    std::mt19937_64 rng(7);
    SampleBatch batch{random_matrix(50, 6, rng, -2.0, 2.0), b.partition};
    const Matrix base = ae_predict(batch, b.ae);
    const Matrix corrected = corrected_predict(batch, b);
    for (std::size_t i = 0; i < base.size(); ++i) {
        EXPECT_GE(corrected.storage()[i] - base.storage()[i], 0.0);
    }
}

TEST(CorrectedPredict, MissingModuleThrows) {
    ModelBundle b = tiny_bundle(false);
    std::mt19937_64 rng(8);
    SampleBatch batch{random_matrix(5, 6, rng), b.partition};
    EXPECT_THROW(corrected_predict(batch, b), UsageError);
}

TEST(BundleIo, RoundTripIsIdentity) {
    ModelBundle b = tiny_bundle(true);
    // Make the optional fields non-trivial.
    b.scoring.sensor_scale = {0.5, 1.0, 2.0, 3.5};
    b.scoring.threshold_base = 0.0625;
    b.scoring.window = 7;
    b.scoring.alpha = 1.5;
    b.standardization.mean = {1, 2, 3, 4, 5, 6};
    b.standardization.stddev = {1, 0.5, 2, 4, 8, 1};
    b.adaptive->bn.running_mean = {0.1, -0.2, 0.3, 0, 0, 0, 0, 0, 0, 1e-17};

    const auto path = std::filesystem::temp_directory_path() / "tard_bundle_roundtrip.json";
    save_bundle(b, path);
    const ModelBundle loaded = load_bundle(path);
    EXPECT_TRUE(bundles_equal(b, loaded));
    std::filesystem::remove(path);
}

TEST(BundleIo, WrongDimensionNamesField) {
    ModelBundle b = tiny_bundle(false);
    const auto path = std::filesystem::temp_directory_path() / "tard_bundle_badshape.json";
    save_bundle(b, path);

    // Corrupt the declared width of the first encoder weight.
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string needle = "\"cols\": 50";
    const auto pos = text.find(needle);
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, needle.size(), "\"cols\": 51");
    std::ofstream out(path);
    out << text;
    out.close();

    try {
        load_bundle(path);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("ae.encoder[0]"), std::string::npos)
            << "error should name the offending field: " << e.what();
    }
    std::filesystem::remove(path);
}

TEST(BundleIo, MissingFieldNamesField) {
    ModelBundle b = tiny_bundle(false);
    const auto path = std::filesystem::temp_directory_path() / "tard_bundle_missing.json";
    save_bundle(b, path);
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string needle = "\"threshold_base\"";
    const auto pos = text.find(needle);
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, needle.size(), "\"threshold_bass\"");
    std::ofstream out(path);
    out << text;
    out.close();

    try {
        load_bundle(path);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("threshold_base"), std::string::npos) << e.what();
    }
    std::filesystem::remove(path);
}

TEST(BundleIo, ReloadedBundleScoresIdentically) {
    // Train a small bundle, save, load, score the same stream: identical.
    const SampleBatch raw = synthetic_batch(600, 33);
    const Standardization st = compute_standardization(raw.values);
    SampleBatch std_batch = raw;
    st.apply(std_batch.values);

    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 77;
    ModelBundle bundle;
    bundle.ae = pretrain_source(std_batch, cfg);
    bundle.adaptive = train_adaptive(std_batch, bundle.ae, cfg);
    bundle.partition = raw.partition;
    bundle.standardization = st;
    bundle.scoring.sensor_scale = sensor_scale_from(raw.sensors());
    bundle.scoring.threshold_base = 0.01;
    bundle.seed = 77;

    const auto path = std::filesystem::temp_directory_path() / "tard_bundle_scores.json";
    save_bundle(bundle, path);
    ModelBundle reloaded = load_bundle(path);

    const SampleBatch probe = synthetic_batch(100, 34);
    const auto s1 = score_series_eval(probe, bundle, ScoreMode::MeanPlusMax);
    const auto s2 = score_series_eval(probe, reloaded, ScoreMode::MeanPlusMax);
    ASSERT_EQ(s1.size(), s2.size());
    for (std::size_t i = 0; i < s1.size(); ++i) {
        EXPECT_EQ(s1[i], s2[i]) << "score " << i << " differs after reload";
    }
    std::filesystem::remove(path);
}

TEST(Checksum, SensitiveToEveryParameterGroup) {
    std::mt19937_64 rng(9);
    AutoencoderModel m = make_autoencoder(3, 2, rng);
    const std::uint64_t base = parameter_checksum(m);

    AutoencoderModel t = m;
    t.encoder[1].dense.weight(0, 0) += 1e-12;
    EXPECT_NE(parameter_checksum(t), base);

    t = m;
    t.encoder[2].bn.running_var[3] += 1e-12;
    EXPECT_NE(parameter_checksum(t), base);

    t = m;
    t.decoder[0].bias[7] -= 1e-12;
    EXPECT_NE(parameter_checksum(t), base);

    EXPECT_EQ(parameter_checksum(m), base);
}
