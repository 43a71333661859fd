#pragma once

#include <algorithm>
#include <memory>
#include <type_traits>
#include <vector>

#include "fernnet/common.hpp"
#include "fernnet/rng.hpp"

namespace fernnet {

// Dense row-major tensor with an optional gradient buffer. Nodes are shared
// between the user and the tape, hence the shared_ptr idiom throughout.
template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>);

public:
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until ensure_grad(); always data.size() after
    bool requires_grad = false;

    Tensor() = default;

    explicit Tensor(Shape s, T fill = T(0))
        : shape(std::move(s)), data(shape_numel(shape), fill) {}

    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != shape_numel(shape)) {
            throw ShapeError("tensor: " + std::to_string(data.size()) + " values do not fill shape " +
                             shape_str(shape));
        }
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    bool is_scalar() const { return numel() == 1; }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }

    void zero_grad() {
        std::fill(grad.begin(), grad.end(), T(0));
    }

    static constexpr DType dtype() {
        return std::is_same_v<T, float> ? DType::F32 : DType::F64;
    }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape shape, T fill = T(0)) {
    return std::make_shared<Tensor<T>>(std::move(shape), fill);
}

template <typename T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> values) {
    return std::make_shared<Tensor<T>>(std::move(shape), std::move(values));
}

template <typename T>
TensorPtr<T> make_scalar(T value) {
    return make_tensor<T>(Shape{1}, std::vector<T>{value});
}

template <typename T>
TensorPtr<T> make_param(Shape shape, std::vector<T> values) {
    auto t = make_tensor<T>(std::move(shape), std::move(values));
    t->requires_grad = true;
    t->ensure_grad();
    return t;
}

// N(0, stddev) initialization from the shared Rng.
template <typename T>
TensorPtr<T> randn(Shape shape, Rng& rng, T stddev = T(1)) {
    auto t = make_tensor<T>(std::move(shape));
    for (auto& v : t->data) v = static_cast<T>(rng.normal()) * stddev;
    return t;
}

}  // namespace fernnet
