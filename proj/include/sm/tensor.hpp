#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sm {

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major tensor. Rank and extents are dynamic; element type is
/// the template parameter (float for training artifacts, double for
/// verification mode, int32_t for label data).
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> sh) : shape(std::move(sh)) {
        for (auto e : shape)
            if (e < 1) throw ShapeError("tensor extent must be >= 1, got shape " + shape_str(shape));
        data.assign(numel_of(shape), T{});
    }

    Tensor(std::vector<std::size_t> sh, std::vector<T> d) : shape(std::move(sh)), data(std::move(d)) {
        if (data.size() != numel_of(shape))
            throw ShapeError("data size " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    }

    static std::size_t numel_of(const std::vector<std::size_t>& sh) {
        std::size_t n = 1;
        for (auto e : sh) n *= e;
        return n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    // 2-D accessors; most of the math lives on matrices.
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const {
        if (shape.size() < 2) return shape.empty() ? 1 : 1;
        std::size_t c = 1;
        for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
        return c;
    }

    T& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    static Tensor zeros(std::vector<std::size_t> sh) { return Tensor(std::move(sh)); }

    static Tensor full(std::vector<std::size_t> sh, T v) {
        Tensor t(std::move(sh));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using TensorI = Tensor<std::int32_t>;

}  // namespace sm
