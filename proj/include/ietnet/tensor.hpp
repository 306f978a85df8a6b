#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ietnet {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

/// Dense row-major n-dimensional array. The scalar type selects the
/// precision: float for training, double for verification runs.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(Shape s) : shape(std::move(s)) {
        check_extents(shape);
        data.assign(static_cast<std::size_t>(numel(shape)), T(0));
    }

    Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        check_extents(shape);
        if (static_cast<std::int64_t>(data.size()) != numel(shape)) {
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        }
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor ones(Shape s) { return full(std::move(s), T(1)); }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }

    T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    T item() const {
        if (size() != 1) {
            throw std::invalid_argument("item() requires a single-element tensor, got shape " + shape_str(shape));
        }
        return data[0];
    }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> d(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) d[i] = static_cast<U>(data[i]);
        return Tensor<U>(shape, std::move(d));
    }

private:
    static void check_extents(const Shape& s) {
        for (auto e : s) {
            if (e <= 0) {
                throw std::invalid_argument("tensor extents must be positive, got shape " + shape_str(s));
            }
        }
    }
};

inline std::vector<std::int64_t> row_major_strides(const Shape& shape) {
    std::vector<std::int64_t> strides(shape.size(), 1);
    for (std::int64_t i = static_cast<std::int64_t>(shape.size()) - 2; i >= 0; --i) {
        strides[static_cast<std::size_t>(i)] =
            strides[static_cast<std::size_t>(i + 1)] * shape[static_cast<std::size_t>(i + 1)];
    }
    return strides;
}

}  // namespace ietnet
