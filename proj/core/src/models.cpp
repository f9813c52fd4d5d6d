#include "tard/models.hpp"

#include <cstring>

#include "tard/errors.hpp"

namespace tard {

void AutoencoderModel::set_bn_mode(BatchNormMode mode) {
    for (auto& block : encoder) block.bn.mode = mode;
}

AutoencoderModel make_autoencoder(std::size_t sensor_dim, std::size_t control_dim,
                                  std::mt19937_64& rng) {
    if (sensor_dim == 0 || control_dim == 0) {
        throw ConfigError("make_autoencoder: sensor and control dims must be positive");
    }
    AutoencoderModel m;
    m.sensor_dim = sensor_dim;
    m.control_dim = control_dim;
    m.input_dim = sensor_dim + control_dim;

    std::size_t in = m.input_dim;
    for (std::size_t b = 0; b < 3; ++b) {
        const std::size_t out = AutoencoderModel::kEncoderWidths[b];
        m.encoder[b].dense = make_dense(in, out, rng);
        m.encoder[b].bn = make_batchnorm(out);
        in = out;
    }
    const std::array<std::size_t, 3> dec_out = {50, 50, sensor_dim};
    in = AutoencoderModel::kLatentDim;
    for (std::size_t b = 0; b < 3; ++b) {
        m.decoder[b] = make_dense(in, dec_out[b], rng);
        in = dec_out[b];
    }
    return m;
}

AeGrads make_ae_grads(const AutoencoderModel& m) {
    AeGrads g;
    for (std::size_t b = 0; b < 3; ++b) {
        g.enc_dense[b] = make_dense_grads(m.encoder[b].dense);
        g.enc_bn[b] = make_batchnorm_grads(m.encoder[b].bn);
        g.dec_dense[b] = make_dense_grads(m.decoder[b]);
    }
    return g;
}

Matrix ae_encode(const Matrix& input, AutoencoderModel& model, AeCache* cache) {
    if (input.cols() != model.input_dim) {
        throw ConfigError("ae_encode: input has " + std::to_string(input.cols()) +
                          " columns, model expects " + std::to_string(model.input_dim));
    }
    Matrix h = input;
    for (std::size_t b = 0; b < 3; ++b) {
        auto& block = model.encoder[b];
        if (cache) {
            h = dense_forward(h, block.dense, cache->enc_dense[b]);
            h = batchnorm_forward(h, block.bn, cache->enc_bn[b]);
            h = relu_forward(h, cache->enc_relu[b]);
        } else {
            h = dense_forward(h, block.dense);
            h = batchnorm_forward(h, block.bn);
            h = relu(h);
        }
    }
    if (cache) cache->latent = h;
    return h;
}

Matrix ae_forward(const Matrix& input, AutoencoderModel& model, AeCache* cache) {
    Matrix h = ae_encode(input, model, cache);
    for (std::size_t b = 0; b < 3; ++b) {
        if (cache) {
            h = dense_forward(h, model.decoder[b], cache->dec_dense[b]);
            if (b < 2) h = relu_forward(h, cache->dec_relu[b]);
        } else {
            h = dense_forward(h, model.decoder[b]);
            if (b < 2) h = relu(h);
        }
    }
    return h;
}

Matrix ae_encode_backward(const Matrix& grad_latent, const AeCache& cache,
                          const AutoencoderModel& model, AeGrads& grads) {
    Matrix g = grad_latent;
    for (std::size_t b = 3; b-- > 0;) {
        g = relu_backward(g, cache.enc_relu[b]);
        g = batchnorm_backward(g, cache.enc_bn[b], model.encoder[b].bn, grads.enc_bn[b]);
        g = dense_backward(g, cache.enc_dense[b], model.encoder[b].dense, grads.enc_dense[b]);
    }
    return g;
}

Matrix ae_backward(const Matrix& grad_pred, const Matrix* grad_latent_extra,
                   const AeCache& cache, const AutoencoderModel& model, AeGrads& grads) {
    Matrix g = grad_pred;
    for (std::size_t b = 3; b-- > 0;) {
        if (b < 2) g = relu_backward(g, cache.dec_relu[b]);
        g = dense_backward(g, cache.dec_dense[b], model.decoder[b], grads.dec_dense[b]);
    }
    if (grad_latent_extra) {
        if (!g.same_shape(*grad_latent_extra)) {
            throw ConfigError("ae_backward: latent gradient shape mismatch");
        }
        g = g + *grad_latent_extra;
    }
    return ae_encode_backward(g, cache, model, grads);
}

namespace {

template <typename Model, typename Span>
std::vector<Span> ae_views_impl(Model& m) {
    std::vector<Span> v;
    v.reserve(3 * 4 + 3 * 2);
    for (auto& block : m.encoder) {
        v.push_back({block.dense.weight.data(), block.dense.weight.size()});
        v.push_back({block.dense.bias.data(), block.dense.bias.size()});
        v.push_back({block.bn.gamma.data(), block.bn.gamma.size()});
        v.push_back({block.bn.beta.data(), block.bn.beta.size()});
    }
    for (auto& d : m.decoder) {
        v.push_back({d.weight.data(), d.weight.size()});
        v.push_back({d.bias.data(), d.bias.size()});
    }
    return v;
}

}  // namespace

std::vector<std::span<double>> ae_param_views(AutoencoderModel& m) {
    return ae_views_impl<AutoencoderModel, std::span<double>>(m);
}

std::vector<std::span<const double>> ae_param_views(const AutoencoderModel& m) {
    return ae_views_impl<const AutoencoderModel, std::span<const double>>(m);
}

std::vector<std::span<double>> ae_grad_views(AeGrads& g) {
    std::vector<std::span<double>> v;
    v.reserve(3 * 4 + 3 * 2);
    for (std::size_t b = 0; b < 3; ++b) {
        v.push_back({g.enc_dense[b].weight.data(), g.enc_dense[b].weight.size()});
        v.push_back({g.enc_dense[b].bias.data(), g.enc_dense[b].bias.size()});
        v.push_back({g.enc_bn[b].gamma.data(), g.enc_bn[b].gamma.size()});
        v.push_back({g.enc_bn[b].beta.data(), g.enc_bn[b].beta.size()});
    }
    for (std::size_t b = 0; b < 3; ++b) {
        v.push_back({g.dec_dense[b].weight.data(), g.dec_dense[b].weight.size()});
        v.push_back({g.dec_dense[b].bias.data(), g.dec_dense[b].bias.size()});
    }
    return v;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void fnv_mix(std::uint64_t& h, std::span<const double> values) {
    for (double d : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, sizeof(bits));
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffu;
            h *= kFnvPrime;
        }
    }
}

}  // namespace

std::uint64_t parameter_checksum(const AutoencoderModel& m) {
    std::uint64_t h = kFnvOffset;
    for (const auto& view : ae_param_views(m)) fnv_mix(h, view);
    // Running statistics are part of the frozen state.
    for (const auto& block : m.encoder) {
        fnv_mix(h, block.bn.running_mean);
        fnv_mix(h, block.bn.running_var);
    }
    return h;
}

AdaptiveModule make_adaptive_module(std::size_t control_dim, std::size_t sensor_dim,
                                    OutputActivation act, std::mt19937_64& rng) {
    if (sensor_dim == 0 || control_dim == 0) {
        throw ConfigError("make_adaptive_module: dims must be positive");
    }
    AdaptiveModule m;
    m.control_dim = control_dim;
    m.sensor_dim = sensor_dim;
    m.output_activation = act;
    m.layer1 = make_dense(control_dim, AdaptiveModule::kHiddenDim, rng);
    m.bn = make_batchnorm(AdaptiveModule::kHiddenDim);
    m.layer2 = make_dense(AdaptiveModule::kHiddenDim, sensor_dim, rng);
    return m;
}

AdaptiveGrads make_adaptive_grads(const AdaptiveModule& m) {
    return {make_dense_grads(m.layer1), make_batchnorm_grads(m.bn), make_dense_grads(m.layer2)};
}

Matrix adaptive_forward(const Matrix& controls, AdaptiveModule& module, AdaptiveCache* cache) {
    if (controls.cols() != module.control_dim) {
        throw ConfigError("adaptive_forward: expected " + std::to_string(module.control_dim) +
                          " control columns, got " + std::to_string(controls.cols()));
    }
    Matrix h;
    if (cache) {
        h = dense_forward(controls, module.layer1, cache->dense1);
        h = batchnorm_forward(h, module.bn, cache->bn);
        h = relu_forward(h, cache->relu1);
        h = dense_forward(h, module.layer2, cache->dense2);
        if (module.output_activation == OutputActivation::Relu) {
            h = relu_forward(h, cache->out_relu);
        }
    } else {
        h = dense_forward(controls, module.layer1);
        h = batchnorm_forward(h, module.bn);
        h = relu(h);
        h = dense_forward(h, module.layer2);
        if (module.output_activation == OutputActivation::Relu) {
            h = relu(h);
        }
    }
    return h;
}

Matrix adaptive_backward(const Matrix& grad_out, const AdaptiveCache& cache,
                         const AdaptiveModule& module, AdaptiveGrads& grads) {
    Matrix g = grad_out;
    if (module.output_activation == OutputActivation::Relu) {
        g = relu_backward(g, cache.out_relu);
    }
    g = dense_backward(g, cache.dense2, module.layer2, grads.layer2);
    g = relu_backward(g, cache.relu1);
    g = batchnorm_backward(g, cache.bn, module.bn, grads.bn);
    return dense_backward(g, cache.dense1, module.layer1, grads.layer1);
}

std::vector<std::span<double>> adaptive_param_views(AdaptiveModule& m) {
    return {
        {m.layer1.weight.data(), m.layer1.weight.size()},
        {m.layer1.bias.data(), m.layer1.bias.size()},
        {m.bn.gamma.data(), m.bn.gamma.size()},
        {m.bn.beta.data(), m.bn.beta.size()},
        {m.layer2.weight.data(), m.layer2.weight.size()},
        {m.layer2.bias.data(), m.layer2.bias.size()},
    };
}

std::vector<std::span<double>> adaptive_grad_views(AdaptiveGrads& g) {
    return {
        {g.layer1.weight.data(), g.layer1.weight.size()},
        {g.layer1.bias.data(), g.layer1.bias.size()},
        {g.bn.gamma.data(), g.bn.gamma.size()},
        {g.bn.beta.data(), g.bn.beta.size()},
        {g.layer2.weight.data(), g.layer2.weight.size()},
        {g.layer2.bias.data(), g.layer2.bias.size()},
    };
}

std::uint64_t parameter_checksum(const AdaptiveModule& m) {
    std::uint64_t h = kFnvOffset;
    fnv_mix(h, {m.layer1.weight.data(), m.layer1.weight.size()});
    fnv_mix(h, m.layer1.bias);
    fnv_mix(h, m.bn.gamma);
    fnv_mix(h, m.bn.beta);
    fnv_mix(h, {m.layer2.weight.data(), m.layer2.weight.size()});
    fnv_mix(h, m.layer2.bias);
    fnv_mix(h, m.bn.running_mean);
    fnv_mix(h, m.bn.running_var);
    return h;
}

Matrix ae_predict(const SampleBatch& batch, AutoencoderModel& model) {
    batch.partition.validate(batch.values.cols());
    if (batch.partition.sensor_dim() != model.sensor_dim ||
        batch.partition.control_dim() != model.control_dim) {
        throw ConfigError("ae_predict: batch partition does not match model dimensions");
    }
    return ae_forward(batch.values, model);
}

Matrix corrected_predict(const SampleBatch& batch, ModelBundle& bundle) {
    if (!bundle.adaptive) {
        throw UsageError("corrected_predict: bundle has no adaptive module");
    }
    Matrix pred = ae_predict(batch, bundle.ae);
    Matrix correction = adaptive_forward(batch.controls(), *bundle.adaptive);
    return pred + correction;
}

}  // namespace tard
