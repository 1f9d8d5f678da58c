#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pzsl/ops.hpp"
#include "pzsl/optim.hpp"

namespace pzsl {

/// Which axis of the label x instance score matrix the Gumbel-Softmax normalizes.
enum class AssignAxis {
    label,     // each instance picks one label cluster (columns of the K x B map are one-hot)
    instance,  // each label distributes over the instances of the batch
};

inline const char* to_string(AssignAxis a) { return a == AssignAxis::label ? "label" : "instance"; }

inline AssignAxis parse_assign_axis(const std::string& s) {
    if (s == "label") {
        return AssignAxis::label;
    }
    if (s == "instance") {
        return AssignAxis::instance;
    }
    throw ParameterError("unknown assignment axis '" + s + "' (expected label|instance)");
}

struct ModelConfig {
    std::size_t layers = 3;
    std::size_t mlp_hidden = 0;  // 0 selects 4 * d
    std::size_t heads = 1;       // self-attention heads; must divide d
    bool zero_head = true;       // start the classifier at W = 0 (uniform predictions)
};

template <class T>
struct MiningLayer {
    // Instance stream: self-attention then MLP, each followed by residual + layer norm.
    Tensor<T> sa_query, sa_key, sa_value, sa_out;
    Tensor<T> sa_norm_gain, sa_norm_bias;
    Tensor<T> p_mlp_in, p_mlp_in_bias, p_mlp_out, p_mlp_out_bias;
    Tensor<T> p_mlp_norm_gain, p_mlp_norm_bias;
    // Label stream: K-means cross-attention against the instance stream, then MLP.
    Tensor<T> ca_query, ca_key, ca_value;
    Tensor<T> ca_norm_gain, ca_norm_bias;
    Tensor<T> l_mlp_in, l_mlp_in_bias, l_mlp_out, l_mlp_out_bias;
    Tensor<T> l_mlp_norm_gain, l_mlp_norm_bias;
};

/// Label embeddings (K x d, initialized from the text embeddings), the stacked
/// mining layers, and the seen-class linear classifier.
template <class T>
struct ModelParams {
    ModelConfig config;
    std::size_t num_seen = 0;
    std::size_t dim = 0;
    std::size_t hidden = 0;
    Tensor<T> labels;
    std::vector<MiningLayer<T>> layers;
    Tensor<T> head_weight;  // d x Q
    Tensor<T> head_bias;    // Q

    std::size_t num_classes() const noexcept { return labels.rows(); }

    /// Every trainable tensor in a fixed order.
    std::vector<NamedParameter<T>> named_parameters() const {
        std::vector<NamedParameter<T>> out{{"labels", labels}};
        for (std::size_t m = 0; m < layers.size(); ++m) {
            const auto& l = layers[m];
            const std::string p = "layer" + std::to_string(m) + ".";
            for (auto& [name, t] : std::vector<std::pair<const char*, const Tensor<T>*>>{
                     {"sa_query", &l.sa_query},
                     {"sa_key", &l.sa_key},
                     {"sa_value", &l.sa_value},
                     {"sa_out", &l.sa_out},
                     {"sa_norm_gain", &l.sa_norm_gain},
                     {"sa_norm_bias", &l.sa_norm_bias},
                     {"p_mlp_in", &l.p_mlp_in},
                     {"p_mlp_in_bias", &l.p_mlp_in_bias},
                     {"p_mlp_out", &l.p_mlp_out},
                     {"p_mlp_out_bias", &l.p_mlp_out_bias},
                     {"p_mlp_norm_gain", &l.p_mlp_norm_gain},
                     {"p_mlp_norm_bias", &l.p_mlp_norm_bias},
                     {"ca_query", &l.ca_query},
                     {"ca_key", &l.ca_key},
                     {"ca_value", &l.ca_value},
                     {"ca_norm_gain", &l.ca_norm_gain},
                     {"ca_norm_bias", &l.ca_norm_bias},
                     {"l_mlp_in", &l.l_mlp_in},
                     {"l_mlp_in_bias", &l.l_mlp_in_bias},
                     {"l_mlp_out", &l.l_mlp_out},
                     {"l_mlp_out_bias", &l.l_mlp_out_bias},
                     {"l_mlp_norm_gain", &l.l_mlp_norm_gain},
                     {"l_mlp_norm_bias", &l.l_mlp_norm_bias},
                 }) {
                out.push_back({p + name, *t});
            }
        }
        out.push_back({"head_weight", head_weight});
        out.push_back({"head_bias", head_bias});
        return out;
    }

    /// Replaces every parameter handle, in named_parameters() order.
    void assign(const std::vector<Tensor<T>>& tensors) {
        std::size_t k = 0;
        auto next = [&](Tensor<T>& slot) {
            if (tensors.at(k).shape() != slot.shape()) {
                throw DimensionError("assign: shape mismatch for parameter " + std::to_string(k));
            }
            slot = tensors[k++];
        };
        next(labels);
        for (auto& l : layers) {
            for (Tensor<T>* t : {&l.sa_query, &l.sa_key, &l.sa_value, &l.sa_out, &l.sa_norm_gain, &l.sa_norm_bias,
                                 &l.p_mlp_in, &l.p_mlp_in_bias, &l.p_mlp_out, &l.p_mlp_out_bias, &l.p_mlp_norm_gain,
                                 &l.p_mlp_norm_bias, &l.ca_query, &l.ca_key, &l.ca_value, &l.ca_norm_gain,
                                 &l.ca_norm_bias, &l.l_mlp_in, &l.l_mlp_in_bias, &l.l_mlp_out, &l.l_mlp_out_bias,
                                 &l.l_mlp_norm_gain, &l.l_mlp_norm_bias}) {
                next(*t);
            }
        }
        next(head_weight);
        next(head_bias);
        if (k != tensors.size()) {
            throw DimensionError("assign: " + std::to_string(tensors.size()) + " tensors for " + std::to_string(k) +
                                 " parameters");
        }
    }

    /// Deep copy with fresh leaves (no shared nodes with this model).
    ModelParams clone() const {
        ModelParams out = *this;
        std::vector<Tensor<T>> fresh;
        for (const auto& p : named_parameters()) {
            fresh.push_back(Tensor<T>::parameter(p.tensor.value()));
        }
        out.assign(fresh);
        return out;
    }

    void zero_grad() {
        for (auto& p : named_parameters()) {
            p.tensor.zero_grad();
        }
    }
};

/// Builds a model whose label embeddings are a copy of `text_embeddings` (K x d).
/// Weight matrices are uniform in +-1/sqrt(fan_in); biases and norm shifts are zero, norm gains one.
template <class T>
ModelParams<T> init_model(const Array<T>& text_embeddings, std::size_t num_seen, ModelConfig config,
                          std::uint64_t seed) {
    const std::size_t k = text_embeddings.rows(), d = text_embeddings.cols();
    if (text_embeddings.rank() != 2 || k < 2 || d < 2) {
        throw ParameterError("init_model: need at least 2 classes and dimension >= 2, got " +
                             to_string(text_embeddings.shape()));
    }
    if (num_seen == 0 || num_seen > k) {
        throw ParameterError("init_model: seen class count must be in [1, K]");
    }
    if (config.heads == 0 || d % config.heads != 0) {
        throw ParameterError("init_model: heads must divide the embedding dimension");
    }
    ModelParams<T> model;
    model.config = config;
    model.num_seen = num_seen;
    model.dim = d;
    model.hidden = config.mlp_hidden ? config.mlp_hidden : 4 * d;
    const std::size_t h = model.hidden;

    Rng rng = Rng(seed).split(0x696e6974);
    auto weight = [&](std::size_t fan_in, std::size_t fan_out) {
        return Tensor<T>::parameter(random_uniform<T>({fan_in, fan_out}, rng, T{1} / std::sqrt(static_cast<T>(fan_in))));
    };
    auto fill = [](std::size_t n, T v) { return Tensor<T>::parameter(Array<T>::vector(n, v)); };

    model.labels = Tensor<T>::parameter(text_embeddings);
    for (std::size_t m = 0; m < config.layers; ++m) {
        MiningLayer<T> l;
        l.sa_query = weight(d, d);
        l.sa_key = weight(d, d);
        l.sa_value = weight(d, d);
        l.sa_out = weight(d, d);
        l.sa_norm_gain = fill(d, 1);
        l.sa_norm_bias = fill(d, 0);
        l.p_mlp_in = weight(d, h);
        l.p_mlp_in_bias = fill(h, 0);
        l.p_mlp_out = weight(h, d);
        l.p_mlp_out_bias = fill(d, 0);
        l.p_mlp_norm_gain = fill(d, 1);
        l.p_mlp_norm_bias = fill(d, 0);
        l.ca_query = weight(d, d);
        l.ca_key = weight(d, d);
        l.ca_value = weight(d, d);
        l.ca_norm_gain = fill(d, 1);
        l.ca_norm_bias = fill(d, 0);
        l.l_mlp_in = weight(d, h);
        l.l_mlp_in_bias = fill(h, 0);
        l.l_mlp_out = weight(h, d);
        l.l_mlp_out_bias = fill(d, 0);
        l.l_mlp_norm_gain = fill(d, 1);
        l.l_mlp_norm_bias = fill(d, 0);
        model.layers.push_back(std::move(l));
    }
    model.head_weight = config.zero_head ? Tensor<T>::parameter(Array<T>::matrix(d, num_seen)) : weight(d, num_seen);
    model.head_bias = fill(num_seen, 0);
    return model;
}

/// Scaled dot-product self-attention over the batch rows, residual, layer norm.
template <class T>
Tensor<T> self_attention(const Tensor<T>& p, const MiningLayer<T>& layer, std::size_t heads = 1) {
    if (p.rows() == 0) {
        throw DimensionError("self_attention: empty batch");
    }
    const std::size_t d = p.cols();
    const std::size_t head_dim = d / heads;
    Tensor<T> q = matmul(p, layer.sa_query);
    Tensor<T> k = matmul(p, layer.sa_key);
    Tensor<T> v = matmul(p, layer.sa_value);
    const T inv_scale = T{1} / std::sqrt(static_cast<T>(head_dim));
    std::vector<Tensor<T>> parts;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t b = h * head_dim, e = b + head_dim;
        Tensor<T> qh = heads == 1 ? q : slice_cols(q, b, e);
        Tensor<T> kh = heads == 1 ? k : slice_cols(k, b, e);
        Tensor<T> vh = heads == 1 ? v : slice_cols(v, b, e);
        Tensor<T> weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_scale));
        parts.push_back(matmul(weights, vh));
    }
    Tensor<T> mixed = heads == 1 ? parts.front() : concat_cols(parts);
    return layer_norm(add(p, matmul(mixed, layer.sa_out)), layer.sa_norm_gain, layer.sa_norm_bias);
}

/// Gumbel noise for one assignment map. With `fixed` set, the caller supplies the noise
/// (shape B x K for label-axis assignment, K x B otherwise); with neither, no noise.
template <class T>
struct GumbelSettings {
    T tau = T{1};
    bool hard = true;
    AssignAxis axis = AssignAxis::label;
    Rng* rng = nullptr;
    const Array<T>* fixed = nullptr;
};

template <class T>
struct CrossAttentionOutput {
    Tensor<T> update;      // K x d, assignment-weighted sum of value rows
    Tensor<T> assignment;  // K x B
};

/// K-means cross-attention: label queries against instance keys, scores scaled by 1/sqrt(d),
/// normalized with Gumbel-Softmax along the configured axis, applied to instance values.
template <class T>
CrossAttentionOutput<T> kmeans_attention(const Tensor<T>& labels, const Tensor<T>& instances,
                                         const MiningLayer<T>& layer, const GumbelSettings<T>& gumbel) {
    if (instances.rows() == 0) {
        throw DimensionError("kmeans_attention: empty batch");
    }
    if (labels.cols() != instances.cols()) {
        throw DimensionError("kmeans_attention: label dim " + std::to_string(labels.cols()) + " vs instance dim " +
                             std::to_string(instances.cols()));
    }
    const T inv_scale = T{1} / std::sqrt(static_cast<T>(labels.cols()));
    Tensor<T> q = matmul(labels, layer.ca_query);
    Tensor<T> k = matmul(instances, layer.ca_key);
    Tensor<T> v = matmul(instances, layer.ca_value);

    auto normalize = [&](const Tensor<T>& scores) {
        if (gumbel.fixed) {
            return gumbel_softmax_rows(scores, *gumbel.fixed, gumbel.tau, gumbel.hard);
        }
        if (gumbel.rng) {
            return gumbel_softmax_rows(scores, gumbel.tau, gumbel.hard, *gumbel.rng);
        }
        return gumbel_softmax_rows(scores, Array<T>(), gumbel.tau, gumbel.hard);
    };

    Tensor<T> assignment;
    if (gumbel.axis == AssignAxis::label) {
        // B x K scores so that each instance row is normalized over labels.
        assignment = transpose(normalize(scale(matmul(k, transpose(q)), inv_scale)));
    } else {
        assignment = normalize(scale(matmul(q, transpose(k)), inv_scale));
    }
    return {matmul(assignment, v), assignment};
}

template <class T>
Tensor<T> mlp_block(const Tensor<T>& x, const Tensor<T>& w1, const Tensor<T>& b1, const Tensor<T>& w2,
                    const Tensor<T>& b2, const Tensor<T>& gain, const Tensor<T>& bias) {
    Tensor<T> hidden = gelu(add_bias(matmul(x, w1), b1));
    return layer_norm(add(x, add_bias(matmul(hidden, w2), b2)), gain, bias);
}

template <class T>
struct ForwardOptions {
    GumbelSettings<T> gumbel;
    bool mining = true;                               // false classifies the raw embeddings
    const std::vector<Array<T>>* layer_noise = nullptr;  // per-layer fixed Gumbel noise
};

template <class T>
struct ForwardResult {
    Tensor<T> instances;    // P_M, B x d
    Tensor<T> labels;       // L_M, K x d
    Tensor<T> predictions;  // B x Q, row-stochastic
    std::vector<Array<T>> assignments;  // one K x B map per layer
};

/// Runs the mining layers and the classifier on a batch of instance embeddings.
template <class T>
ForwardResult<T> forward(const Tensor<T>& batch, const ModelParams<T>& model, const ForwardOptions<T>& options) {
    if (batch.cols() != model.dim) {
        throw DimensionError("forward: batch dim " + std::to_string(batch.cols()) + " vs model dim " +
                             std::to_string(model.dim));
    }
    ForwardResult<T> out;
    out.instances = batch;
    out.labels = model.labels;
    if (options.mining) {
        for (std::size_t m = 0; m < model.layers.size(); ++m) {
            const auto& layer = model.layers[m];
            try {
                GumbelSettings<T> g = options.gumbel;
                if (options.layer_noise) {
                    g.fixed = &options.layer_noise->at(m);
                }
                Tensor<T> mixed = self_attention(out.instances, layer, model.config.heads);
                auto cross = kmeans_attention(out.labels, mixed, layer, g);
                Tensor<T> labels = layer_norm(add(out.labels, cross.update), layer.ca_norm_gain, layer.ca_norm_bias);
                out.instances = mlp_block(mixed, layer.p_mlp_in, layer.p_mlp_in_bias, layer.p_mlp_out,
                                          layer.p_mlp_out_bias, layer.p_mlp_norm_gain, layer.p_mlp_norm_bias);
                out.labels = mlp_block(labels, layer.l_mlp_in, layer.l_mlp_in_bias, layer.l_mlp_out,
                                       layer.l_mlp_out_bias, layer.l_mlp_norm_gain, layer.l_mlp_norm_bias);
                out.assignments.push_back(cross.assignment.value());
            } catch (const NumericError& e) {
                throw NumericError("mining layer " + std::to_string(m) + ": " + e.what());
            }
        }
    }
    try {
        out.predictions = softmax_rows(add_bias(matmul(out.instances, model.head_weight), model.head_bias));
    } catch (const NumericError& e) {
        throw NumericError(std::string("classifier: ") + e.what());
    }
    return out;
}

} // namespace pzsl
