#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>

#include "tard/netcore.hpp"
#include "tard/types.hpp"

namespace tard {

// ---------------------------------------------------------------------------
// Reconstruction autoencoder f: [sensors, controls] -> predicted sensors.
// Encoder: input_dim -> 50 -> 50 -> 10, dense+BN+ReLU per block.
// Decoder: 10 -> 50 -> 50 -> sensor_dim, ReLU between hidden layers,
// linear output, no BN.
// ---------------------------------------------------------------------------

struct EncoderBlock {
    DenseParams dense;
    BatchNormState bn;
};

struct AutoencoderModel {
    std::size_t input_dim = 0;   // sensor_dim + control_dim
    std::size_t sensor_dim = 0;
    std::size_t control_dim = 0;
    std::array<EncoderBlock, 3> encoder;
    std::array<DenseParams, 3> decoder;

    static constexpr std::array<std::size_t, 3> kEncoderWidths = {50, 50, 10};
    static constexpr std::size_t kLatentDim = 10;

    void set_bn_mode(BatchNormMode mode);
};

AutoencoderModel make_autoencoder(std::size_t sensor_dim, std::size_t control_dim,
                                  std::mt19937_64& rng);

struct AeCache {
    std::array<DenseCache, 3> enc_dense;
    std::array<BatchNormCache, 3> enc_bn;
    std::array<ReluCache, 3> enc_relu;
    std::array<DenseCache, 3> dec_dense;
    std::array<ReluCache, 2> dec_relu;
    Matrix latent;
};

struct AeGrads {
    std::array<DenseGrads, 3> enc_dense;
    std::array<BatchNormGrads, 3> enc_bn;
    std::array<DenseGrads, 3> dec_dense;
};

AeGrads make_ae_grads(const AutoencoderModel& m);

// Forward on an already-standardized feature matrix (all columns, partition
// order preserved). BN behaves per the modes currently set on the model.
Matrix ae_forward(const Matrix& input, AutoencoderModel& model, AeCache* cache = nullptr);
// Encoder only; returns the latent (width 10).
Matrix ae_encode(const Matrix& input, AutoencoderModel& model, AeCache* cache = nullptr);

// Backward through the recorded forward. grad_latent_extra, when non-null,
// is added to the latent gradient (used to inject the MMD term).
// Accumulates into `grads` and returns d loss / d input.
Matrix ae_backward(const Matrix& grad_pred, const Matrix* grad_latent_extra,
                   const AeCache& cache, const AutoencoderModel& model, AeGrads& grads);
// Encoder-only backward from a latent gradient (cache from ae_encode).
Matrix ae_encode_backward(const Matrix& grad_latent, const AeCache& cache,
                          const AutoencoderModel& model, AeGrads& grads);

// Flat parameter/gradient views in one fixed order (for Adam and checksums).
std::vector<std::span<double>> ae_param_views(AutoencoderModel& m);
std::vector<std::span<const double>> ae_param_views(const AutoencoderModel& m);
std::vector<std::span<double>> ae_grad_views(AeGrads& g);

// FNV-1a over every weight, bias, BN parameter and running statistic.
std::uint64_t parameter_checksum(const AutoencoderModel& m);

// ---------------------------------------------------------------------------
// Adaptive module h: controls -> sensor correction.
// dense(control_dim -> 10) + BN + ReLU, dense(10 -> sensor_dim) + output
// activation (ReLU by default; linear optional).
// ---------------------------------------------------------------------------

enum class OutputActivation { Relu, Linear };

struct AdaptiveModule {
    std::size_t control_dim = 0;
    std::size_t sensor_dim = 0;
    DenseParams layer1;
    BatchNormState bn;
    DenseParams layer2;
    OutputActivation output_activation = OutputActivation::Relu;

    static constexpr std::size_t kHiddenDim = 10;

    void set_bn_mode(BatchNormMode mode) { bn.mode = mode; }
};

AdaptiveModule make_adaptive_module(std::size_t control_dim, std::size_t sensor_dim,
                                    OutputActivation act, std::mt19937_64& rng);

struct AdaptiveCache {
    DenseCache dense1;
    BatchNormCache bn;
    ReluCache relu1;
    DenseCache dense2;
    ReluCache out_relu;
};

struct AdaptiveGrads {
    DenseGrads layer1;
    BatchNormGrads bn;
    DenseGrads layer2;
};

AdaptiveGrads make_adaptive_grads(const AdaptiveModule& m);

Matrix adaptive_forward(const Matrix& controls, AdaptiveModule& module,
                        AdaptiveCache* cache = nullptr);
Matrix adaptive_backward(const Matrix& grad_out, const AdaptiveCache& cache,
                         const AdaptiveModule& module, AdaptiveGrads& grads);

std::vector<std::span<double>> adaptive_param_views(AdaptiveModule& m);
std::vector<std::span<double>> adaptive_grad_views(AdaptiveGrads& g);
std::uint64_t parameter_checksum(const AdaptiveModule& m);

// ---------------------------------------------------------------------------
// Bundle: everything a deployment needs in one file.
// ---------------------------------------------------------------------------

enum class ScoreMode { MeanPlusMax, MeanPlusSum };

struct ScoringStats {
    std::vector<double> sensor_scale;  // per-sensor mean |value| of target train+val, raw units
    double threshold_base = 0.0;       // mean smoothed healthy score
    std::size_t window = 10;
    double alpha = 1.0;
    ScoreMode score_mode = ScoreMode::MeanPlusMax;

    friend bool operator==(const ScoringStats&, const ScoringStats&) = default;
};

struct ModelBundle {
    AutoencoderModel ae;
    std::optional<AdaptiveModule> adaptive;
    FeaturePartition partition;
    Standardization standardization;  // fitted on source training rows, all columns
    ScoringStats scoring;
    std::uint64_t seed = 0;
};

// Sensor predictions for a raw batch are produced by the harness; these two
// operate on already-standardized batches and return standardized sensors.
Matrix ae_predict(const SampleBatch& batch, AutoencoderModel& model);
// ae_predict + adaptive correction on the batch's control columns.
// Throws UsageError when bundle.adaptive is absent.
Matrix corrected_predict(const SampleBatch& batch, ModelBundle& bundle);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

bool bundles_equal(const ModelBundle& a, const ModelBundle& b);

}  // namespace tard
