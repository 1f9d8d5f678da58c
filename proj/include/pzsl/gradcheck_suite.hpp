#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pzsl/disambiguation.hpp"
#include "pzsl/gradcheck.hpp"
#include "pzsl/model.hpp"

namespace pzsl {

struct GradcheckEntry {
    std::string name;
    double max_rel_error = 0.0;
};

/// Gradient checks over every differentiable piece of the pipeline, run in double precision
/// at N=8 instances, Q=4 seen classes, K=6 classes, d=6, one mining layer, soft assignment.
inline std::vector<GradcheckEntry> run_gradcheck_suite(std::uint64_t seed) {
    using T = double;
    constexpr std::size_t n = 8, q = 4, k = 6, d = 6;
    std::vector<GradcheckEntry> out;
    using Inputs = std::vector<Tensor<T>>;

    out.push_back({"matmul", gradcheck<T>([](Inputs& x) { return matmul(x[0], x[1]); },
                                          std::vector<Shape>{{3, 4}, {4, 2}}, seed)});
    out.push_back({"softmax_rows", gradcheck<T>([](Inputs& x) { return softmax_rows(x[0]); },
                                                std::vector<Shape>{{3, 5}}, seed)});
    out.push_back({"layer_norm", gradcheck<T>([](Inputs& x) { return layer_norm(x[0], x[1], x[2]); },
                                              std::vector<Shape>{{2, 4}, {4}, {4}}, seed)});

    Rng rng = Rng(seed).split(0x7375697465);
    const Array<T> text = random_uniform<T>({k, d}, rng);
    ModelConfig mc;
    mc.layers = 1;
    const ModelParams<T> base = init_model<T>(text, q, mc, seed);
    const MiningLayer<T>& layer0 = base.layers.front();

    out.push_back({"self_attention", gradcheck<T>(
                                         [&](Inputs& x) {
                                             MiningLayer<T> l = layer0;
                                             l.sa_query = x[1];
                                             l.sa_key = x[2];
                                             l.sa_value = x[3];
                                             l.sa_out = x[4];
                                             l.sa_norm_gain = x[5];
                                             l.sa_norm_bias = x[6];
                                             return self_attention(x[0], l);
                                         },
                                         std::vector<Array<T>>{random_uniform<T>({n, d}, rng),
                                                               layer0.sa_query.value(), layer0.sa_key.value(),
                                                               layer0.sa_value.value(), layer0.sa_out.value(),
                                                               random_uniform<T>({d}, rng),
                                                               random_uniform<T>({d}, rng)},
                                         seed)});

    out.push_back({"kmeans_cross_attention", gradcheck<T>(
                                                 [&](Inputs& x) {
                                                     MiningLayer<T> l = layer0;
                                                     l.ca_query = x[2];
                                                     l.ca_key = x[3];
                                                     l.ca_value = x[4];
                                                     Rng noise(seed);
                                                     GumbelSettings<T> g;
                                                     g.hard = false;
                                                     g.rng = &noise;
                                                     auto cross = kmeans_attention(x[0], x[1], l, g);
                                                     return layer_norm(add(x[0], cross.update), x[5], x[6]);
                                                 },
                                                 std::vector<Array<T>>{text, random_uniform<T>({n, d}, rng),
                                                                       layer0.ca_query.value(), layer0.ca_key.value(),
                                                                       layer0.ca_value.value(),
                                                                       random_uniform<T>({d}, rng),
                                                                       random_uniform<T>({d}, rng)},
                                                 seed)});

    out.push_back({"classifier", gradcheck<T>(
                                     [](Inputs& x) { return softmax_rows(add_bias(matmul(x[0], x[1]), x[2])); },
                                     std::vector<Shape>{{n, d}, {d, q}, {q}}, seed)});

    // Loss inputs: positive R/Y-like weights from the real correction and refinement paths.
    const Array<T> instances = random_uniform<T>({n, d}, rng);
    Array<T> text_seen = Array<T>::matrix(q, d);
    std::copy_n(text.data().begin(), q * d, text_seen.data().begin());
    const Array<T> correction = label_correction(instances, text_seen);
    Array<std::uint8_t> mask = Array<std::uint8_t>::matrix(n, q);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < q; ++j) {
            mask(i, j) = j == i % q || rng.bernoulli(0.5);
        }
    }
    const Array<T> confidence =
        refine_confidence(correction, detail::softmax_rows_value(random_uniform<T>({n, q}, rng)), mask);

    out.push_back({"partial_zsl_loss", gradcheck<T>(
                                           [&](Inputs& x) {
                                               return partial_zsl_loss(softmax_rows(x[0]), correction, confidence,
                                                                       text, x[1])
                                                   .total;
                                           },
                                           std::vector<Array<T>>{random_uniform<T>({n, q}, rng),
                                                                 random_uniform<T>({k, d}, rng)},
                                           seed)});

    // Whole block: every parameter, loss plus a fixed probe on L_M so the label stream is covered.
    std::vector<Array<T>> params;
    for (const auto& p : base.named_parameters()) {
        params.push_back(p.tensor.value());
    }
    for (T& v : params.front().data()) {
        v += static_cast<T>(0.1 * (2 * rng.uniform_open() - 1));  // move L off C so the distance term is live
    }
    const Array<T> probe = random_uniform<T>({k, d}, rng);
    out.push_back({"mining_block_loss", gradcheck<T>(
                                            [&](Inputs& x) {
                                                ModelParams<T> model = base;
                                                model.assign(x);
                                                Rng noise(seed);
                                                ForwardOptions<T> opts;
                                                opts.gumbel.hard = false;
                                                opts.gumbel.rng = &noise;
                                                auto fwd = forward(Tensor<T>::constant(instances), model, opts);
                                                auto loss = partial_zsl_loss(fwd.predictions, correction, confidence,
                                                                             text, model.labels);
                                                return add(loss.total, weighted_sum(fwd.labels, probe));
                                            },
                                            params, seed)});
    return out;
}

} // namespace pzsl
