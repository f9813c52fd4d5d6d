#include "tard/netcore.hpp"

#include <cmath>

#include "tard/errors.hpp"

namespace tard {

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

DenseParams make_dense(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng) {
    DenseParams p;
    p.weight = Matrix(in_dim, out_dim);
    p.bias.assign(out_dim, 0.0);
    const double limit = glorot_limit(in_dim, out_dim);
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : p.weight.storage()) w = dist(rng);
    return p;
}

DenseGrads make_dense_grads(const DenseParams& p) {
    return {Matrix(p.weight.rows(), p.weight.cols()), std::vector<double>(p.bias.size(), 0.0)};
}

Matrix dense_forward(const Matrix& input, const DenseParams& params) {
    if (input.cols() != params.in_dim()) {
        throw ConfigError("dense_forward: input has " + std::to_string(input.cols()) +
                          " columns, layer expects " + std::to_string(params.in_dim()));
    }
    Matrix out = matmul(input, params.weight);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto row = out.row(i);
        for (std::size_t j = 0; j < out.cols(); ++j) row[j] += params.bias[j];
    }
    return out;
}

Matrix dense_forward(const Matrix& input, const DenseParams& params, DenseCache& cache) {
    cache.input = input;
    return dense_forward(input, params);
}

Matrix dense_backward(const Matrix& grad_out, const DenseCache& cache,
                      const DenseParams& params, DenseGrads& grads) {
    if (cache.input.empty()) {
        throw UsageError("dense_backward: no forward cache recorded");
    }
    if (grad_out.rows() != cache.input.rows() || grad_out.cols() != params.out_dim()) {
        throw ConfigError("dense_backward: gradient shape mismatch");
    }
    // dW = X^T * dY, db = colsum(dY), dX = dY * W^T
    Matrix dw = matmul_at(cache.input, grad_out);
    for (std::size_t i = 0; i < dw.size(); ++i) grads.weight.storage()[i] += dw.storage()[i];
    std::vector<double> db = column_sum(grad_out);
    for (std::size_t j = 0; j < db.size(); ++j) grads.bias[j] += db[j];
    return matmul_bt(grad_out, params.weight);
}

BatchNormState make_batchnorm(std::size_t dim) {
    BatchNormState s;
    s.gamma.assign(dim, 1.0);
    s.beta.assign(dim, 0.0);
    s.running_mean.assign(dim, 0.0);
    s.running_var.assign(dim, 1.0);
    return s;
}

BatchNormGrads make_batchnorm_grads(const BatchNormState& s) {
    return {std::vector<double>(s.dim(), 0.0), std::vector<double>(s.dim(), 0.0)};
}

namespace {

Matrix batchnorm_forward_impl(const Matrix& input, BatchNormState& state,
                              BatchNormCache* cache) {
    const std::size_t dim = state.dim();
    if (input.cols() != dim) {
        throw ConfigError("batchnorm_forward: input has " + std::to_string(input.cols()) +
                          " columns, layer expects " + std::to_string(dim));
    }
    const bool batch_stats = state.mode != BatchNormMode::Eval;
    if (batch_stats && input.rows() < 2) {
        throw ConfigError("batchnorm_forward: degenerate batch of " +
                          std::to_string(input.rows()) + " row(s) in Train/AdaBN mode");
    }

    std::vector<double> mean, var;
    if (batch_stats) {
        mean = column_mean(input);
        var = column_var(input, mean);
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }

    std::vector<double> inv_std(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
    }

    Matrix x_hat(input.rows(), dim);
    Matrix out(input.rows(), dim);
    for (std::size_t i = 0; i < input.rows(); ++i) {
        const auto in = input.row(i);
        auto xh = x_hat.row(i);
        auto o = out.row(i);
        for (std::size_t j = 0; j < dim; ++j) {
            xh[j] = (in[j] - mean[j]) * inv_std[j];
            o[j] = state.gamma[j] * xh[j] + state.beta[j];
        }
    }

    if (state.mode == BatchNormMode::Train) {
        for (std::size_t j = 0; j < dim; ++j) {
            state.running_mean[j] =
                (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mean[j];
            state.running_var[j] =
                (1.0 - state.momentum) * state.running_var[j] + state.momentum * var[j];
        }
    } else if (state.mode == BatchNormMode::AdaBN) {
        state.running_mean = mean;
        state.running_var = var;
    }

    if (cache) {
        cache->x_hat = std::move(x_hat);
        cache->inv_std = std::move(inv_std);
        cache->mode_used = state.mode;
    }
    return out;
}

}  // namespace

Matrix batchnorm_forward(const Matrix& input, BatchNormState& state) {
    return batchnorm_forward_impl(input, state, nullptr);
}

Matrix batchnorm_forward(const Matrix& input, BatchNormState& state, BatchNormCache& cache) {
    return batchnorm_forward_impl(input, state, &cache);
}

Matrix batchnorm_backward(const Matrix& grad_out, const BatchNormCache& cache,
                          const BatchNormState& state, BatchNormGrads& grads) {
    if (cache.x_hat.empty()) {
        throw UsageError("batchnorm_backward: no forward cache recorded");
    }
    if (!grad_out.same_shape(cache.x_hat)) {
        throw ConfigError("batchnorm_backward: gradient shape mismatch");
    }
    const std::size_t n = grad_out.rows();
    const std::size_t dim = grad_out.cols();

    // dgamma_j = sum_i g_ij xhat_ij ; dbeta_j = sum_i g_ij
    std::vector<double> sum_g(dim, 0.0), sum_gx(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto g = grad_out.row(i);
        const auto xh = cache.x_hat.row(i);
        for (std::size_t j = 0; j < dim; ++j) {
            sum_g[j] += g[j];
            sum_gx[j] += g[j] * xh[j];
        }
    }
    for (std::size_t j = 0; j < dim; ++j) {
        grads.gamma[j] += sum_gx[j];
        grads.beta[j] += sum_g[j];
    }

    Matrix grad_in(n, dim);
    if (cache.mode_used == BatchNormMode::Eval) {
        // Running statistics are constants: dx = g * gamma * inv_std
        for (std::size_t i = 0; i < n; ++i) {
            const auto g = grad_out.row(i);
            auto gi = grad_in.row(i);
            for (std::size_t j = 0; j < dim; ++j) {
                gi[j] = g[j] * state.gamma[j] * cache.inv_std[j];
            }
        }
    } else {
        // Batch statistics depend on the input:
        // dx_ij = inv_std_j/N * (N*dxhat_ij - sum(dxhat_.j) - xhat_ij * sum(dxhat_.j xhat_.j))
        // where dxhat = g * gamma.
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto g = grad_out.row(i);
            const auto xh = cache.x_hat.row(i);
            auto gi = grad_in.row(i);
            for (std::size_t j = 0; j < dim; ++j) {
                const double gammaj = state.gamma[j];
                const double dxhat = g[j] * gammaj;
                const double sum_dxhat = sum_g[j] * gammaj;
                const double sum_dxhat_xhat = sum_gx[j] * gammaj;
                gi[j] = cache.inv_std[j] * inv_n *
                        (static_cast<double>(n) * dxhat - sum_dxhat - xh[j] * sum_dxhat_xhat);
            }
        }
    }
    return grad_in;
}

Matrix relu(const Matrix& input) {
    Matrix out = input;
    for (double& v : out.storage()) {
        if (v < 0.0) v = 0.0;
    }
    return out;
}

Matrix relu_forward(const Matrix& input, ReluCache& cache) {
    cache.positive.resize(input.size());
    Matrix out = input;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool pos = out.storage()[i] > 0.0;
        cache.positive[i] = pos ? 1 : 0;
        if (!pos) out.storage()[i] = 0.0;
    }
    return out;
}

Matrix relu_backward(const Matrix& grad_out, const ReluCache& cache) {
    if (cache.positive.size() != grad_out.size()) {
        throw UsageError("relu_backward: cache does not match gradient shape");
    }
    Matrix grad_in = grad_out;
    for (std::size_t i = 0; i < grad_in.size(); ++i) {
        if (!cache.positive[i]) grad_in.storage()[i] = 0.0;
    }
    return grad_in;
}

double mse_loss(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) {
        throw ConfigError("mse_loss: shape mismatch (" + std::to_string(pred.rows()) + "x" +
                          std::to_string(pred.cols()) + " vs " + std::to_string(target.rows()) +
                          "x" + std::to_string(target.cols()) + ")");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.storage()[i] - target.storage()[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

Matrix mse_loss_grad(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) {
        throw ConfigError("mse_loss_grad: shape mismatch");
    }
    Matrix grad(pred.rows(), pred.cols());
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        grad.storage()[i] = scale * (pred.storage()[i] - target.storage()[i]);
    }
    return grad;
}

AdamState make_adam(std::size_t param_count, const AdamConfig& cfg) {
    AdamState s;
    s.cfg = cfg;
    s.first_moment.assign(param_count, 0.0);
    s.second_moment.assign(param_count, 0.0);
    return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw ConfigError("adam_step: parameter/gradient/state sizes disagree");
    }
    state.step += 1;
    const double b1 = state.cfg.beta1;
    const double b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        params[i] -= state.cfg.lr * m_hat / (std::sqrt(v_hat) + state.cfg.eps);
    }
}

void AdamOptimizer::step(std::span<const std::span<double>> params,
                         std::span<const std::span<const double>> grads) {
    if (params.size() != grads.size()) {
        throw ConfigError("AdamOptimizer::step: tensor counts disagree");
    }
    if (states_.empty()) {
        states_.reserve(params.size());
        for (const auto& p : params) states_.push_back(make_adam(p.size(), cfg_));
    }
    if (states_.size() != params.size()) {
        throw ConfigError("AdamOptimizer::step: tensor count changed between steps");
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        adam_step(params[t], grads[t], states_[t]);
    }
}

}  // namespace tard
