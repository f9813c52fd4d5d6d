#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tard/matrix.hpp"

namespace tard {

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

struct DenseParams {
    Matrix weight;              // in_dim x out_dim
    std::vector<double> bias;   // out_dim

    std::size_t in_dim() const { return weight.rows(); }
    std::size_t out_dim() const { return weight.cols(); }
};

struct DenseGrads {
    Matrix weight;
    std::vector<double> bias;
};

struct DenseCache {
    Matrix input;
};

DenseParams make_dense(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng);
DenseGrads make_dense_grads(const DenseParams& p);

// output = input * weight + bias (bias broadcast per row)
Matrix dense_forward(const Matrix& input, const DenseParams& params);
Matrix dense_forward(const Matrix& input, const DenseParams& params, DenseCache& cache);
// Accumulates parameter gradients into `grads` (+=) and returns d loss / d input.
Matrix dense_backward(const Matrix& grad_out, const DenseCache& cache,
                      const DenseParams& params, DenseGrads& grads);

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

enum class BatchNormMode {
    Train,  // normalize by batch stats, EMA-update running stats
    Eval,   // normalize by running stats
    AdaBN,  // normalize by batch stats, running stats <- batch stats (full replacement)
};

struct BatchNormState {
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;   // running <- (1-momentum)*running + momentum*batch
    double eps = 1e-5;
    BatchNormMode mode = BatchNormMode::Train;

    std::size_t dim() const { return gamma.size(); }
};

struct BatchNormGrads {
    std::vector<double> gamma;
    std::vector<double> beta;
};

struct BatchNormCache {
    Matrix x_hat;                    // normalized pre-affine activations
    std::vector<double> inv_std;     // 1/sqrt(var + eps), per column
    BatchNormMode mode_used = BatchNormMode::Train;
};

BatchNormState make_batchnorm(std::size_t dim);
BatchNormGrads make_batchnorm_grads(const BatchNormState& s);

// Train/AdaBN need >= 2 rows (batch variance is meaningless otherwise) and
// mutate the running statistics; Eval leaves state untouched.
Matrix batchnorm_forward(const Matrix& input, BatchNormState& state);
Matrix batchnorm_forward(const Matrix& input, BatchNormState& state, BatchNormCache& cache);
Matrix batchnorm_backward(const Matrix& grad_out, const BatchNormCache& cache,
                          const BatchNormState& state, BatchNormGrads& grads);

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

struct ReluCache {
    std::vector<std::uint8_t> positive;  // mask: input > 0
};

Matrix relu(const Matrix& input);
Matrix relu_forward(const Matrix& input, ReluCache& cache);
Matrix relu_backward(const Matrix& grad_out, const ReluCache& cache);

// ---------------------------------------------------------------------------
// Mean-squared error, averaged over all rows*cols entries
// ---------------------------------------------------------------------------

double mse_loss(const Matrix& pred, const Matrix& target);
// d mse / d pred = 2*(pred - target) / (rows*cols)
Matrix mse_loss_grad(const Matrix& pred, const Matrix& target);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    std::int64_t step = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
};

AdamState make_adam(std::size_t param_count, const AdamConfig& cfg = {});

// One bias-corrected update of `params` in place; increments state.step.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

// Convenience over a set of parameter tensors updated in lockstep.
class AdamOptimizer {
public:
    explicit AdamOptimizer(const AdamConfig& cfg = {}) : cfg_(cfg) {}

    // Spans must arrive in the same order and with the same sizes every step.
    void step(std::span<const std::span<double>> params,
              std::span<const std::span<const double>> grads);

private:
    AdamConfig cfg_;
    std::vector<AdamState> states_;
};

// Uniform init in +/- sqrt(6/(fan_in+fan_out)).
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

}  // namespace tard
