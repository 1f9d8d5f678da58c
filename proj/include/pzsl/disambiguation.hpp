#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pzsl/embedding_io.hpp"
#include "pzsl/ops.hpp"
#include "pzsl/parallel.hpp"

namespace pzsl {

/// Per-epoch disambiguation state: confidences Y and correction weights R, both N x Q.
template <class T>
struct ConfidenceState {
    Array<T> confidence;
    Array<T> correction;
    std::size_t epoch = 0;
};

namespace detail {

template <class T>
std::vector<T> row_norms(const Array<T>& a, const char* what) {
    std::vector<T> norms(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        norms[i] = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), T{}));
        if (!(norms[i] >= T(1e-12))) {
            throw NumericError(std::string("label_correction: zero-norm ") + what + " row " + std::to_string(i));
        }
    }
    return norms;
}

} // namespace detail

/// Correction matrix: r_ij = cos(p_i, c_j) for current instance embeddings p (N x d)
/// against the seen-class text embeddings c (Q x d). Entries are clamped to [-1, 1].
template <class T>
Array<T> label_correction(const Array<T>& instances, const Array<T>& text) {
    if (instances.cols() != text.cols()) {
        throw DimensionError("label_correction: instance dim " + std::to_string(instances.cols()) + " vs text dim " +
                             std::to_string(text.cols()));
    }
    const auto pn = detail::row_norms(instances, "instance");
    const auto cn = detail::row_norms(text, "text");
    const std::size_t n = instances.rows(), q = text.rows(), d = text.cols();
    Array<T> r = Array<T>::matrix(n, q);
    parallel_rows(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const T* p = &instances(i, 0);
            for (std::size_t j = 0; j < q; ++j) {
                const T* c = &text(j, 0);
                T dot{};
                for (std::size_t k = 0; k < d; ++k) {
                    dot += p[k] * c[k];
                }
                r(i, j) = std::clamp(dot / (pn[i] * cn[j]), T{-1}, T{1});
            }
        }
    });
    return r;
}

struct LossTerms {
    bool cross_entropy = true;
    bool distance = true;
    bool clamp_correction = false;  // use max(r, 0) as the CE weight
};

template <class T>
struct PartialLoss {
    Tensor<T> total;
    Tensor<T> ce_term;
    Tensor<T> dist_term;
};

/// -sum_ij r_ij Y_ij log M_ij  +  ||C - L||^2, either term switchable off.
/// M is floored at 1e-12 before the log.
template <class T>
PartialLoss<T> partial_zsl_loss(const Tensor<T>& predictions, const Array<T>& correction, const Array<T>& confidence,
                                const Array<T>& text, const Tensor<T>& label_embeddings, LossTerms terms = {}) {
    predictions.value().require_same_shape(correction, "partial_zsl_loss: predictions vs correction");
    predictions.value().require_same_shape(confidence, "partial_zsl_loss: predictions vs confidence");
    label_embeddings.value().require_same_shape(text, "partial_zsl_loss: label embeddings vs text");
    Array<T> weights = correction;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const T r = terms.clamp_correction ? std::max(weights[i], T{}) : weights[i];
        weights[i] = r * confidence[i];
    }
    PartialLoss<T> out;
    out.ce_term = terms.cross_entropy ? weighted_nll(predictions, weights)
                                      : Tensor<T>::constant(Array<T>({1}, T{}));
    out.dist_term = terms.distance ? squared_distance(text, label_embeddings)
                                   : Tensor<T>::constant(Array<T>({1}, T{}));
    out.total = add(out.ce_term, out.dist_term);
    if (!std::isfinite(out.total.item())) {
        throw NumericError("partial_zsl_loss: non-finite loss");
    }
    return out;
}

inline constexpr double kConfidenceFloor = 1e-8;

/// Y^0: uniform over each candidate set.
template <class T>
Array<T> initial_confidence(const Array<std::uint8_t>& mask) {
    Array<T> y = Array<T>::matrix(mask.rows(), mask.cols());
    for (std::size_t i = 0; i < mask.rows(); ++i) {
        auto m = mask.row(i);
        const auto n = std::count(m.begin(), m.end(), std::uint8_t{1});
        if (n == 0) {
            throw DataError("initial_confidence: empty candidate set in row " + std::to_string(i));
        }
        for (std::size_t j = 0; j < m.size(); ++j) {
            y(i, j) = m[j] ? T{1} / static_cast<T>(n) : T{};
        }
    }
    return y;
}

/// Y_ij = max(U_ij, eps) / sum_{k in S_i} max(U_ik, eps) with U = R + M; zero off the candidate set.
template <class T>
Array<T> refine_confidence(const Array<T>& correction, const Array<T>& predictions, const Array<std::uint8_t>& mask) {
    correction.require_same_shape(predictions, "refine_confidence");
    if (mask.rows() != correction.rows() || mask.cols() != correction.cols()) {
        throw DimensionError("refine_confidence: mask shape " + to_string(mask.shape()) + " vs " +
                             to_string(correction.shape()));
    }
    const T floor = static_cast<T>(kConfidenceFloor);
    Array<T> y = Array<T>::matrix(mask.rows(), mask.cols());
    for (std::size_t i = 0; i < mask.rows(); ++i) {
        T total{};
        bool any = false;
        for (std::size_t j = 0; j < mask.cols(); ++j) {
            if (mask(i, j)) {
                y(i, j) = std::max(correction(i, j) + predictions(i, j), floor);
                total += y(i, j);
                any = true;
            }
        }
        if (!any) {
            throw DataError("refine_confidence: empty candidate set in row " + std::to_string(i));
        }
        for (std::size_t j = 0; j < mask.cols(); ++j) {
            y(i, j) /= total;
        }
    }
    return y;
}

/// argmax_k <p, c_k>, lowest index on ties.
template <class T>
std::size_t predict(std::span<const T> instance, const Array<T>& classes) {
    if (classes.rows() == 0) {
        throw ParameterError("predict: no classes");
    }
    if (instance.size() != classes.cols()) {
        throw DimensionError("predict: instance dim " + std::to_string(instance.size()) + " vs class dim " +
                             std::to_string(classes.cols()));
    }
    std::size_t best = 0;
    T best_score{};
    for (std::size_t k = 0; k < classes.rows(); ++k) {
        auto c = classes.row(k);
        const T score = std::inner_product(instance.begin(), instance.end(), c.begin(), T{});
        if (k == 0 || score > best_score) {
            best = k;
            best_score = score;
        }
    }
    return best;
}

template <class T>
std::vector<std::size_t> predict_all(const Array<T>& instances, const Array<T>& classes) {
    std::vector<std::size_t> out(instances.rows());
    for (std::size_t i = 0; i < instances.rows(); ++i) {
        out[i] = predict<T>(instances.row(i), classes);
    }
    return out;
}

/// Accuracy over seen-truth and unseen-truth instances; an empty partition stays unset.
struct Accuracy {
    std::optional<double> seen;
    std::optional<double> unseen;
};

inline Accuracy evaluate(std::span<const std::size_t> predictions, std::span<const std::size_t> truth,
                         const ClassVocabulary& vocab) {
    if (predictions.size() != truth.size()) {
        throw DataError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(truth.size()) + " labels");
    }
    std::size_t seen_total = 0, seen_hit = 0, unseen_total = 0, unseen_hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= vocab.num_classes()) {
            throw DataError("evaluate: unknown label " + std::to_string(truth[i]));
        }
        const bool hit = predictions[i] == truth[i];
        if (vocab.is_seen(truth[i])) {
            ++seen_total;
            seen_hit += hit;
        } else {
            ++unseen_total;
            unseen_hit += hit;
        }
    }
    Accuracy acc;
    if (seen_total) {
        acc.seen = static_cast<double>(seen_hit) / static_cast<double>(seen_total);
    }
    if (unseen_total) {
        acc.unseen = static_cast<double>(unseen_hit) / static_cast<double>(unseen_total);
    }
    return acc;
}

/// Fraction of rows whose confidence argmax (lowest index on ties) equals the hidden truth.
template <class T>
double disambiguation_accuracy(const Array<T>& confidence, std::span<const std::size_t> truth) {
    if (truth.size() != confidence.rows() || truth.empty()) {
        throw DataError("disambiguation_accuracy: truth length mismatch");
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < confidence.rows(); ++i) {
        auto row = confidence.row(i);
        hit += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == truth[i];
    }
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

} // namespace pzsl
