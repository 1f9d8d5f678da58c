#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "pzsl/rng.hpp"
#include "pzsl/tensor.hpp"

namespace pzsl {

namespace detail {

template <class T>
void require_matrix(const Array<T>& a, const char* op) {
    if (a.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got shape " + to_string(a.shape()));
    }
}

template <class T>
Array<T> softmax_rows_value(const Array<T>& x, T inv_temperature = T{1}) {
    Array<T> y(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto in = x.row(i);
        auto out = y.row(i);
        T mx = -std::numeric_limits<T>::infinity();
        for (T v : in) {
            if (std::isnan(v)) {
                throw NumericError("softmax: NaN input in row " + std::to_string(i));
            }
            mx = std::max(mx, v);
        }
        T total{};
        for (std::size_t j = 0; j < in.size(); ++j) {
            out[j] = std::exp((in[j] - mx) * inv_temperature);
            total += out[j];
        }
        for (T& v : out) {
            v /= total;
        }
    }
    return y;
}

// dx = scale * y ⊙ (dy - rowsum(dy ⊙ y))
template <class T>
Array<T> softmax_rows_backward(const Array<T>& y, const Array<T>& dy, T scale) {
    Array<T> dx(y.shape());
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto yr = y.row(i);
        auto gr = dy.row(i);
        T dot{};
        for (std::size_t j = 0; j < yr.size(); ++j) {
            dot += yr[j] * gr[j];
        }
        auto out = dx.row(i);
        for (std::size_t j = 0; j < yr.size(); ++j) {
            out[j] = scale * yr[j] * (gr[j] - dot);
        }
    }
    return dx;
}

} // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_matrix(a.value(), "matmul");
    detail::require_matrix(b.value(), "matmul");
    return Tensor<T>::from_op("matmul", matmul(a.value(), b.value()), {a, b}, [](auto& n) {
        auto& lhs = *n.parents[0];
        auto& rhs = *n.parents[1];
        if (lhs.requires_grad) {
            lhs.accumulate(matmul(n.grad, transpose(rhs.value)));
        }
        if (rhs.requires_grad) {
            rhs.accumulate(matmul(transpose(lhs.value), n.grad));
        }
    });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require_matrix(a.value(), "transpose");
    return Tensor<T>::from_op("transpose", transpose(a.value()), {a},
                              [](auto& n) { n.parents[0]->accumulate(transpose(n.grad)); });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    a.value().require_same_shape(b.value(), "add");
    Array<T> out = a.value();
    out += b.value();
    return Tensor<T>::from_op("add", std::move(out), {a, b}, [](auto& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(n.grad);
    });
}

/// x[r×c] + bias[c] broadcast over rows.
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    if (bias.value().size() != x.cols()) {
        throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " vs input " + to_string(x.shape()));
    }
    Array<T> out = x.value();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto row = out.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] += bias.value()[j];
        }
    }
    return Tensor<T>::from_op("add_bias", std::move(out), {x, bias}, [](auto& n) {
        n.parents[0]->accumulate(n.grad);
        auto& b = *n.parents[1];
        if (b.requires_grad) {
            Array<T> db(b.value.shape());
            for (std::size_t i = 0; i < n.grad.rows(); ++i) {
                auto row = n.grad.row(i);
                for (std::size_t j = 0; j < row.size(); ++j) {
                    db[j] += row[j];
                }
            }
            b.accumulate(db);
        }
    });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    Array<T> out = x.value();
    for (T& v : out.data()) {
        v *= factor;
    }
    return Tensor<T>::from_op("scale", std::move(out), {x}, [factor](auto& n) {
        Array<T> g = n.grad;
        for (T& v : g.data()) {
            v *= factor;
        }
        n.parents[0]->accumulate(g);
    });
}

/// Tanh-approximated GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr T k = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    constexpr T c = static_cast<T>(0.044715);
    Array<T> out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x.value()[i];
        out[i] = T{0.5} * v * (T{1} + std::tanh(k * (v + c * v * v * v)));
    }
    return Tensor<T>::from_op("gelu", std::move(out), {x}, [](auto& n) {
        auto& in = *n.parents[0];
        Array<T> g(in.value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = in.value[i];
            const T th = std::tanh(k * (v + c * v * v * v));
            const T d = T{0.5} * (T{1} + th) + T{0.5} * v * (T{1} - th * th) * k * (T{1} + 3 * c * v * v);
            g[i] = n.grad[i] * d;
        }
        in.accumulate(g);
    });
}

/// Row-wise softmax, stabilized by subtracting each row's max.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    detail::require_matrix(x.value(), "softmax_rows");
    return Tensor<T>::from_op("softmax_rows", detail::softmax_rows_value(x.value()), {x}, [](auto& n) {
        n.parents[0]->accumulate(detail::softmax_rows_backward(n.value, n.grad, T{1}));
    });
}

/// Random uniform(-scale, scale) array.
template <class T>
Array<T> random_uniform(const Shape& shape, Rng& rng, T scale = T{1}) {
    Array<T> a(shape);
    for (T& v : a.data()) {
        v = static_cast<T>((2 * rng.uniform_open() - 1) * scale);
    }
    return a;
}

/// Standard Gumbel(0,1) noise of the given shape.
template <class T>
Array<T> gumbel_noise(std::size_t rows, std::size_t cols, Rng& rng) {
    Array<T> g = Array<T>::matrix(rows, cols);
    for (T& v : g.data()) {
        v = static_cast<T>(rng.gumbel());
    }
    return g;
}

/// softmax((x + noise) / tau) per row. In hard mode the forward value is the one-hot
/// row argmax (lowest index on ties) while gradients flow through the soft values.
template <class T>
Tensor<T> gumbel_softmax_rows(const Tensor<T>& x, const Array<T>& noise, T tau, bool hard) {
    detail::require_matrix(x.value(), "gumbel_softmax_rows");
    if (!(tau > T{})) {
        throw ParameterError("gumbel_softmax_rows: tau must be > 0, got " + std::to_string(tau));
    }
    Array<T> perturbed = x.value();
    if (!noise.empty()) {
        perturbed += noise;
    }
    Array<T> soft = detail::softmax_rows_value(perturbed, T{1} / tau);
    if (!soft.all_finite()) {
        // the one-hot forward would hide this
        throw NumericError("non-finite value produced by gumbel_softmax_rows (tau " + std::to_string(tau) + ")");
    }
    Array<T> out = soft;
    if (hard) {
        for (std::size_t i = 0; i < out.rows(); ++i) {
            auto row = out.row(i);
            std::size_t best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
            std::fill(row.begin(), row.end(), T{});
            row[best] = T{1};
        }
    }
    return Tensor<T>::from_op("gumbel_softmax_rows", std::move(out), {x},
                              [soft = std::move(soft), tau](auto& n) {
                                  n.parents[0]->accumulate(detail::softmax_rows_backward(soft, n.grad, T{1} / tau));
                              });
}

template <class T>
Tensor<T> gumbel_softmax_rows(const Tensor<T>& x, T tau, bool hard, Rng& rng) {
    return gumbel_softmax_rows(x, gumbel_noise<T>(x.rows(), x.cols(), rng), tau, hard);
}

/// Per-row standardization (biased variance, eps inside the sqrt) followed by gamma/beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
    detail::require_matrix(x.value(), "layer_norm");
    const std::size_t r = x.rows(), c = x.cols();
    if (c < 2) {
        throw DimensionError("layer_norm: needs at least 2 columns");
    }
    if (gamma.value().size() != c || beta.value().size() != c) {
        throw DimensionError("layer_norm: gamma/beta must have " + std::to_string(c) + " entries");
    }
    Array<T> xhat(x.shape());
    std::vector<T> inv_std(r);
    Array<T> out(x.shape());
    for (std::size_t i = 0; i < r; ++i) {
        auto in = x.value().row(i);
        T mean{};
        for (T v : in) {
            mean += v;
        }
        mean /= static_cast<T>(c);
        T var{};
        for (T v : in) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<T>(c);
        inv_std[i] = T{1} / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            xhat(i, j) = (in[j] - mean) * inv_std[i];
            out(i, j) = gamma.value()[j] * xhat(i, j) + beta.value()[j];
        }
    }
    return Tensor<T>::from_op(
        "layer_norm", std::move(out), {x, gamma, beta},
        [xhat = std::move(xhat), inv_std = std::move(inv_std)](auto& n) {
            auto& in = *n.parents[0];
            auto& g = *n.parents[1];
            auto& b = *n.parents[2];
            const std::size_t rows = xhat.rows(), cols = xhat.cols();
            Array<T> dgamma(g.value.shape()), dbeta(b.value.shape()), dx(in.value.shape());
            std::vector<T> dxhat(cols);
            for (std::size_t i = 0; i < rows; ++i) {
                T mean_d{}, mean_dx{};
                for (std::size_t j = 0; j < cols; ++j) {
                    const T dy = n.grad(i, j);
                    dbeta[j] += dy;
                    dgamma[j] += dy * xhat(i, j);
                    dxhat[j] = dy * g.value[j];
                    mean_d += dxhat[j];
                    mean_dx += dxhat[j] * xhat(i, j);
                }
                mean_d /= static_cast<T>(cols);
                mean_dx /= static_cast<T>(cols);
                for (std::size_t j = 0; j < cols; ++j) {
                    dx(i, j) = inv_std[i] * (dxhat[j] - mean_d - xhat(i, j) * mean_dx);
                }
            }
            in.accumulate(dx);
            g.accumulate(dgamma);
            b.accumulate(dbeta);
        });
}

/// Columns [begin, end).
template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
    if (begin > end || end > x.cols()) {
        throw DimensionError("slice_cols: range out of bounds");
    }
    Array<T> out = Array<T>::matrix(x.rows(), end - begin);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = begin; j < end; ++j) {
            out(i, j - begin) = x.value()(i, j);
        }
    }
    return Tensor<T>::from_op("slice_cols", std::move(out), {x}, [begin](auto& n) {
        auto& in = *n.parents[0];
        Array<T> g(in.value.shape());
        for (std::size_t i = 0; i < n.grad.rows(); ++i) {
            for (std::size_t j = 0; j < n.grad.cols(); ++j) {
                g(i, begin + j) = n.grad(i, j);
            }
        }
        in.accumulate(g);
    });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no inputs");
    }
    std::size_t rows = parts.front().rows(), cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) {
            throw DimensionError("concat_cols: row counts differ");
        }
        cols += p.cols();
    }
    Array<T> out = Array<T>::matrix(rows, cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < p.cols(); ++j) {
                out(i, offset + j) = p.value()(i, j);
            }
        }
        offset += p.cols();
    }
    return Tensor<T>::from_op("concat_cols", std::move(out), parts, [](auto& n) {
        std::size_t off = 0;
        for (auto& parent : n.parents) {
            const std::size_t w = parent->value.cols();
            if (parent->requires_grad) {
                Array<T> g(parent->value.shape());
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        g(i, j) = n.grad(i, off + j);
                    }
                }
                parent->accumulate(g);
            }
            off += w;
        }
    });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    T total{};
    for (T v : x.value().data()) {
        total += v;
    }
    return Tensor<T>::from_op("sum", Array<T>({1}, total), {x}, [](auto& n) {
        n.parents[0]->accumulate(Array<T>(n.parents[0]->value.shape(), n.grad[0]));
    });
}

/// Sum of elementwise products with a constant weight matrix.
template <class T>
Tensor<T> weighted_sum(const Tensor<T>& x, const Array<T>& weights) {
    x.value().require_same_shape(weights, "weighted_sum");
    T total{};
    for (std::size_t i = 0; i < weights.size(); ++i) {
        total += x.value()[i] * weights[i];
    }
    return Tensor<T>::from_op("weighted_sum", Array<T>({1}, total), {x}, [weights](auto& n) {
        Array<T> g = weights;
        for (T& v : g.data()) {
            v *= n.grad[0];
        }
        n.parents[0]->accumulate(g);
    });
}

/// -sum(w ⊙ log(max(p, floor))) with constant weights w.
template <class T>
Tensor<T> weighted_nll(const Tensor<T>& probs, const Array<T>& weights, T floor = T(1e-12)) {
    probs.value().require_same_shape(weights, "weighted_nll");
    T total{};
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] != T{}) {
            total -= weights[i] * std::log(std::max(probs.value()[i], floor));
        }
    }
    return Tensor<T>::from_op("weighted_nll", Array<T>({1}, total), {probs}, [weights, floor](auto& n) {
        auto& p = *n.parents[0];
        Array<T> g(p.value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (p.value[i] > floor) {
                g[i] = -n.grad[0] * weights[i] / p.value[i];
            }
        }
        p.accumulate(g);
    });
}

/// ||target - x||^2 (squared Frobenius norm) against a constant target.
template <class T>
Tensor<T> squared_distance(const Array<T>& target, const Tensor<T>& x) {
    x.value().require_same_shape(target, "squared_distance");
    T total{};
    for (std::size_t i = 0; i < target.size(); ++i) {
        const T d = x.value()[i] - target[i];
        total += d * d;
    }
    return Tensor<T>::from_op("squared_distance", Array<T>({1}, total), {x}, [target](auto& n) {
        auto& in = *n.parents[0];
        Array<T> g(in.value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] = 2 * n.grad[0] * (in.value[i] - target[i]);
        }
        in.accumulate(g);
    });
}

} // namespace pzsl
