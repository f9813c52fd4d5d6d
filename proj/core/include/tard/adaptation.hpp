#pragma once

#include <cstdint>
#include <vector>

#include "tard/models.hpp"
#include "tard/types.hpp"

namespace tard {

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;       // >= 2 (batch-norm requirement)
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::size_t patience = 10;         // early-stop patience, epochs
    double validation_fraction = 0.2;  // in (0, 0.5]

    void validate() const;
};

struct MMDConfig {
    // Explicit RBF bandwidths (sigma in exp(-d^2 / (2 sigma^2))). When empty,
    // bandwidth_factors x median pairwise latent distance at initialization.
    std::vector<double> bandwidths;
    std::vector<double> bandwidth_factors = {0.5, 1.0, 2.0, 4.0, 8.0};
    double lambda = 1.0;

    void validate() const;
};

// Per-epoch telemetry, filled when the caller passes a log.
struct TrainLog {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::size_t best_epoch = 0;
    std::vector<double> mmd_bandwidths;  // resolved bandwidths (pretrain_mmd only)
};

// Reconstruction pretraining on healthy (standardized) source data.
// Minimizes MSE of predicted vs actual sensors; early-stops on a seeded
// random validation split; returns the best-validation snapshot with all
// BN modes left in Eval.
AutoencoderModel pretrain_source(const SampleBatch& source, const TrainConfig& cfg,
                                 TrainLog* log = nullptr);

// Trains the adaptive module on limited healthy target data against a frozen
// backbone (asserted by checksum; backbone BN runs in Eval the whole time).
// The module's own BN runs in Train mode; validation is the time-ordered tail.
AdaptiveModule train_adaptive(const SampleBatch& target, AutoencoderModel& frozen,
                              const TrainConfig& cfg,
                              OutputActivation act = OutputActivation::Relu,
                              TrainLog* log = nullptr);

// AdaBN baseline: returns a copy of the model whose BN running statistics are
// replaced by the target batch's statistics (weights untouched).
AutoencoderModel adabn_transform(const AutoencoderModel& model, const SampleBatch& target_batch);

// Unbiased multi-kernel RBF MMD^2 between two latent matrices (equal widths,
// >= 2 rows each). Kernel values are averaged across bandwidths. Equal sample
// counts use the paired U-statistic (exactly 0 for identical inputs).
double mmd_loss(const Matrix& source_latent, const Matrix& target_latent, const MMDConfig& cfg);

// mmd_loss plus gradients with respect to both latent matrices.
double mmd_loss_grad(const Matrix& source_latent, const Matrix& target_latent,
                     const MMDConfig& cfg, Matrix& grad_source, Matrix& grad_target);

// Median pairwise Euclidean distance over the pooled rows of a and b.
double median_pairwise_distance(const Matrix& a, const Matrix& b);

// Reconstruction pretraining with an MMD alignment term on encoder latents:
// loss = MSE + lambda * MMD^2(latent_s, latent_t), co-sampling a target batch
// per step. With lambda == 0 the trajectory is identical to pretrain_source
// under the same seed (target co-sampling uses a separate RNG stream).
AutoencoderModel pretrain_mmd(const SampleBatch& source, const SampleBatch& target,
                              const TrainConfig& cfg, const MMDConfig& mmd,
                              TrainLog* log = nullptr);

}  // namespace tard
