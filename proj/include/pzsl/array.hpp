#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pzsl/error.hpp"

namespace pzsl {

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major buffer with a shape. Rank 1 arrays behave as a single row.
template <class T>
class Array {
public:
    Array() = default;

    explicit Array(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

    Array(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (element_count(shape_) != data_.size()) {
            throw DimensionError("array data length " + std::to_string(data_.size()) +
                                 " does not match shape " + pzsl::to_string(shape_));
        }
    }

    /// Matrix from nested rows, e.g. {{1, 2}, {3, 4}}.
    Array(std::initializer_list<std::initializer_list<T>> rows) {
        std::size_t cols = rows.size() ? rows.begin()->size() : 0;
        shape_ = {rows.size(), cols};
        data_.reserve(rows.size() * cols);
        for (const auto& row : rows) {
            if (row.size() != cols) {
                throw DimensionError("ragged matrix literal");
            }
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Array matrix(std::size_t rows, std::size_t cols, T fill = T{}) { return Array({rows, cols}, fill); }
    static Array vector(std::size_t n, T fill = T{}) { return Array({n}, fill); }

    static Array identity(std::size_t n) {
        Array out = matrix(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            out(i, i) = T{1};
        }
        return out;
    }

    template <class U>
    static Array cast(const Array<U>& other) {
        std::vector<T> data(other.data().begin(), other.data().end());
        return Array(other.shape(), std::move(data));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t rows() const noexcept { return shape_.size() >= 2 ? shape_[0] : 1; }
    std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

    std::span<T> span() noexcept { return data_; }
    std::span<const T> span() const noexcept { return data_; }
    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }
    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

    std::span<T> row(std::size_t r) noexcept { return std::span<T>(data_).subspan(r * cols(), cols()); }
    std::span<const T> row(std::size_t r) const noexcept {
        return std::span<const T>(data_).subspan(r * cols(), cols());
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Array& operator+=(const Array& other) {
        require_same_shape(other, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += other.data_[i];
        }
        return *this;
    }

    void require_same_shape(const Array& other, const char* what) const {
        if (shape_ != other.shape_) {
            throw DimensionError(std::string(what) + ": shape " + pzsl::to_string(shape_) + " vs " +
                                 pzsl::to_string(other.shape_));
        }
    }

    friend bool operator==(const Array& a, const Array& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    Shape shape_;
    std::vector<T> data_;
};

/// Rows of `source` selected by `indices`, in order.
template <class T>
Array<T> gather_rows(const Array<T>& source, std::span<const std::size_t> indices) {
    Array<T> out = Array<T>::matrix(indices.size(), source.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto src = source.row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

/// Plain (non-differentiable) product a * b.
template <class T>
Array<T> matmul(const Array<T>& a, const Array<T>& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
    Array<T> out = Array<T>::matrix(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        T* orow = &out(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a(i, p);
            if (av == T{}) {
                continue;
            }
            const T* brow = &b(p, 0);
            for (std::size_t j = 0; j < c; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return out;
}

template <class T>
Array<T> transpose(const Array<T>& a) {
    Array<T> out = Array<T>::matrix(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

/// Scales every row to unit L2 norm. Zero rows are left untouched.
template <class T>
void normalize_rows(Array<T>& a) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto row = a.row(i);
        T norm = std::sqrt(std::inner_product(row.begin(), row.end(), row.begin(), T{}));
        if (norm > T{}) {
            for (T& v : row) {
                v /= norm;
            }
        }
    }
}

} // namespace pzsl
