#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pzsl/ops.hpp"

namespace pzsl {

/// Compares the analytic gradient of `op` with central finite differences.
///
/// `op` maps a vector of input tensors to a tensor of any shape; it is reduced to a
/// scalar by a fixed random projection drawn from `seed`. `op` must be deterministic,
/// so stochastic ops inside it have to reseed their generator on every call.
/// Returns max over all input elements of |a - n| / max(1e-6, |a| + |n|).
template <class T, class Op>
double gradcheck(Op&& op, const std::vector<Array<T>>& inputs, std::uint64_t seed, T h = T(1e-3)) {
    auto run = [&](const std::vector<Array<T>>& values, bool track) {
        std::vector<Tensor<T>> tensors;
        tensors.reserve(values.size());
        for (const auto& v : values) {
            tensors.push_back(track ? Tensor<T>::parameter(v) : Tensor<T>::constant(v));
        }
        return std::make_pair(op(tensors), tensors);
    };

    auto [probe, probe_inputs] = run(inputs, false);
    Rng rng = Rng(seed).split(0x67726164);
    const Array<T> projection = random_uniform<T>(probe.shape(), rng);

    auto [out, tracked] = run(inputs, true);
    weighted_sum(out, projection).backward();

    double worst = 0.0;
    std::vector<Array<T>> shifted = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const T original = inputs[k][i];
            shifted[k][i] = original + h;
            const double plus = weighted_sum(run(shifted, false).first, projection).item();
            shifted[k][i] = original - h;
            const double minus = weighted_sum(run(shifted, false).first, projection).item();
            shifted[k][i] = original;

            const double numeric = (plus - minus) / (2.0 * static_cast<double>(h));
            const double analytic = tracked[k].has_grad() ? static_cast<double>(tracked[k].grad()[i]) : 0.0;
            const double rel = std::abs(analytic - numeric) / std::max(1e-6, std::abs(analytic) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

/// Same as above with inputs drawn uniformly from (-1, 1) for the given shapes.
template <class T, class Op>
double gradcheck(Op&& op, const std::vector<Shape>& shapes, std::uint64_t seed, T h = T(1e-3)) {
    Rng rng = Rng(seed).split(0x696e70);
    std::vector<Array<T>> inputs;
    for (const auto& s : shapes) {
        inputs.push_back(random_uniform<T>(s, rng));
    }
    return gradcheck<T>(std::forward<Op>(op), inputs, seed, h);
}

} // namespace pzsl
