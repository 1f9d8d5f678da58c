#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pzsl/tensor.hpp"

namespace pzsl {

template <class T>
struct NamedParameter {
    std::string name;
    Tensor<T> tensor;
};

/// Heavy-ball SGD: v <- momentum * v + g; p <- p - lr * v.
/// Velocities start at zero and are matched to parameters by position.
template <class T>
class SgdMomentum {
public:
    SgdMomentum(T lr, T momentum) : lr_(lr), momentum_(momentum) {}

    void step(std::vector<NamedParameter<T>>& params) {
        if (velocity_.empty()) {
            for (const auto& p : params) {
                velocity_.emplace_back(p.tensor.shape());
            }
        }
        if (velocity_.size() != params.size()) {
            throw DimensionError("sgd: parameter list changed between steps");
        }
        for (const auto& p : params) {
            if (p.tensor.has_grad() && !p.tensor.grad().all_finite()) {
                throw NumericError("sgd: non-finite gradient for " + p.name);
            }
        }
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor<T>& t = params[k].tensor;
            Array<T>& v = velocity_[k];
            Array<T>& value = t.mutable_value();
            const bool has = t.has_grad();
            for (std::size_t i = 0; i < value.size(); ++i) {
                v[i] = momentum_ * v[i] + (has ? t.grad()[i] : T{});
                value[i] -= lr_ * v[i];
            }
        }
    }

    const std::vector<Array<T>>& velocity() const noexcept { return velocity_; }

private:
    T lr_;
    T momentum_;
    std::vector<Array<T>> velocity_;
};

} // namespace pzsl
