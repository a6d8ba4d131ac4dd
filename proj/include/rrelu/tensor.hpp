#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rrelu/error.hpp"

namespace rrelu {

inline std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

// Dense n-dimensional array, row-major.  Immutable by convention once it has
// been handed to the autodiff graph.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(numel(shape), T(0)) {}
    Tensor(std::vector<std::size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != data.size())
            throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
    }

    static Tensor full(std::vector<std::size_t> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    Tensor<T> reshaped(std::vector<std::size_t> s) const {
        if (numel(s) != data.size())
            throw DimensionError("reshape: " + shape_str(shape) + " -> " + shape_str(s));
        return Tensor<T>(std::move(s), data);
    }
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace rrelu
