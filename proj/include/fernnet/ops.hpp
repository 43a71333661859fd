#pragma once

#include <cmath>
#include <optional>

#include "fernnet/tape.hpp"

namespace fernnet {

namespace detail {

template <typename T>
void require_matrix(const TensorPtr<T>& t, const char* who) {
    if (t->rank() != 2) {
        throw ShapeError(std::string(who) + ": expected a 2-d tensor, got " + shape_str(t->shape));
    }
}

}  // namespace detail

// out = a @ b for a: RxK, b: KxC.
template <typename T>
TensorPtr<T> matmul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    if (a->shape[1] != b->shape[0]) {
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    const std::size_t R = a->shape[0], K = a->shape[1], C = b->shape[1];
    auto out = make_tensor<T>({R, C});
    const T* ap = a->data.data();
    const T* bp = b->data.data();
    T* op = out->data.data();
    for (std::size_t i = 0; i < R; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            const T av = ap[i * K + k];
            const T* brow = bp + k * C;
            T* orow = op + i * C;
            for (std::size_t j = 0; j < C; ++j) orow[j] += av * brow[j];
        }
    }
    if (tape.enabled() && (a->requires_grad || b->requires_grad)) {
        out->requires_grad = true;
        tape.record([a, b, out, R, K, C]() {
            if (out->grad.empty()) return;
            const T* g = out->grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                T* ga = a->grad.data();
                const T* bp2 = b->data.data();
                for (std::size_t i = 0; i < R; ++i) {
                    for (std::size_t k = 0; k < K; ++k) {
                        T s = T(0);
                        const T* grow = g + i * C;
                        const T* brow = bp2 + k * C;
                        for (std::size_t j = 0; j < C; ++j) s += grow[j] * brow[j];
                        ga[i * K + k] += s;
                    }
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                T* gb = b->grad.data();
                const T* ap2 = a->data.data();
                for (std::size_t i = 0; i < R; ++i) {
                    for (std::size_t k = 0; k < K; ++k) {
                        const T av = ap2[i * K + k];
                        const T* grow = g + i * C;
                        T* gbrow = gb + k * C;
                        for (std::size_t j = 0; j < C; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> transpose(Tape<T>& tape, const TensorPtr<T>& x) {
    detail::require_matrix(x, "transpose");
    const std::size_t R = x->shape[0], C = x->shape[1];
    auto out = make_tensor<T>({C, R});
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) out->data[j * R + i] = x->data[i * C + j];
    if (tracing(tape, x)) {
        out->requires_grad = true;
        tape.record([x, out, R, C]() {
            if (out->grad.empty()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j) x->grad[i * C + j] += out->grad[j * R + i];
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> tanh_op(Tape<T>& tape, const TensorPtr<T>& x) {
    auto out = make_tensor<T>(x->shape);
    for (std::size_t i = 0; i < x->numel(); ++i) out->data[i] = std::tanh(x->data[i]);
    if (tracing(tape, x)) {
        out->requires_grad = true;
        tape.record([x, out]() {
            if (out->grad.empty()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < x->numel(); ++i) {
                const T y = out->data[i];
                x->grad[i] += out->grad[i] * (T(1) - y * y);
            }
        });
    }
    return out;
}

// max(x, 0); subgradient at 0 is 0.
template <typename T>
TensorPtr<T> relu_op(Tape<T>& tape, const TensorPtr<T>& x) {
    auto out = make_tensor<T>(x->shape);
    for (std::size_t i = 0; i < x->numel(); ++i) out->data[i] = x->data[i] > T(0) ? x->data[i] : T(0);
    if (tracing(tape, x)) {
        out->requires_grad = true;
        tape.record([x, out]() {
            if (out->grad.empty()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < x->numel(); ++i)
                if (x->data[i] > T(0)) x->grad[i] += out->grad[i];
        });
    }
    return out;
}

enum class EwKind { Add, Sub, Mul };

// Elementwise binary op. Supported shape pairs: identical shapes, or one
// side a scalar broadcast over the other.
template <typename T>
TensorPtr<T> elementwise(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b, EwKind kind) {
    const bool a_scalar = a->is_scalar(), b_scalar = b->is_scalar();
    if (!a_scalar && !b_scalar && a->shape != b->shape) {
        throw ShapeError("elementwise: shapes not broadcastable: " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    const auto& out_shape = a_scalar && !b_scalar ? b->shape : a->shape;
    auto out = make_tensor<T>(out_shape);
    const std::size_t n = out->numel();
    for (std::size_t i = 0; i < n; ++i) {
        const T av = a->data[a_scalar ? 0 : i];
        const T bv = b->data[b_scalar ? 0 : i];
        switch (kind) {
            case EwKind::Add: out->data[i] = av + bv; break;
            case EwKind::Sub: out->data[i] = av - bv; break;
            case EwKind::Mul: out->data[i] = av * bv; break;
        }
    }
    if (tape.enabled() && (a->requires_grad || b->requires_grad)) {
        out->requires_grad = true;
        tape.record([a, b, out, kind, a_scalar, b_scalar, n]() {
            if (out->grad.empty()) return;
            const T* g = out->grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) {
                    T contrib = g[i];
                    if (kind == EwKind::Mul) contrib *= b->data[b_scalar ? 0 : i];
                    a->grad[a_scalar ? 0 : i] += contrib;
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) {
                    T contrib = g[i];
                    switch (kind) {
                        case EwKind::Add: break;
                        case EwKind::Sub: contrib = -contrib; break;
                        case EwKind::Mul: contrib *= a->data[a_scalar ? 0 : i]; break;
                    }
                    b->grad[b_scalar ? 0 : i] += contrib;
                }
            }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    return elementwise(tape, a, b, EwKind::Add);
}
template <typename T>
TensorPtr<T> sub(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    return elementwise(tape, a, b, EwKind::Sub);
}
template <typename T>
TensorPtr<T> mul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    return elementwise(tape, a, b, EwKind::Mul);
}

enum class ReduceKind { Sum, Mean };

// Reduce over one axis, or over everything when axis is omitted.
template <typename T>
TensorPtr<T> reduce(Tape<T>& tape, const TensorPtr<T>& x, ReduceKind kind,
                    std::optional<std::size_t> axis = std::nullopt) {
    const std::size_t n = x->numel();
    if (!axis) {
        auto out = make_tensor<T>({1});
        T s = T(0);
        for (std::size_t i = 0; i < n; ++i) s += x->data[i];
        const T denom = kind == ReduceKind::Mean ? static_cast<T>(n) : T(1);
        out->data[0] = s / denom;
        if (tracing(tape, x)) {
            out->requires_grad = true;
            tape.record([x, out, denom, n]() {
                if (out->grad.empty()) return;
                x->ensure_grad();
                const T g = out->grad[0] / denom;
                for (std::size_t i = 0; i < n; ++i) x->grad[i] += g;
            });
        }
        return out;
    }
    const std::size_t ax = *axis;
    if (ax >= x->rank()) {
        throw ShapeError("reduce: axis " + std::to_string(ax) + " out of range for " + shape_str(x->shape));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= x->shape[i];
    for (std::size_t i = ax + 1; i < x->rank(); ++i) inner *= x->shape[i];
    const std::size_t len = x->shape[ax];
    Shape out_shape;
    for (std::size_t i = 0; i < x->rank(); ++i)
        if (i != ax) out_shape.push_back(x->shape[i]);
    if (out_shape.empty()) out_shape = {1};
    auto out = make_tensor<T>(out_shape);
    const T denom = kind == ReduceKind::Mean ? static_cast<T>(len) : T(1);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i)
                out->data[o * inner + i] += x->data[(o * len + l) * inner + i] / denom;
    if (tracing(tape, x)) {
        out->requires_grad = true;
        tape.record([x, out, outer, len, inner, denom]() {
            if (out->grad.empty()) return;
            x->ensure_grad();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t l = 0; l < len; ++l)
                    for (std::size_t i = 0; i < inner; ++i)
                        x->grad[(o * len + l) * inner + i] += out->grad[o * inner + i] / denom;
        });
    }
    return out;
}

// out[i][j] = m[i][j] + v[j]; the row-broadcast add used for conv bias.
template <typename T>
TensorPtr<T> add_bias(Tape<T>& tape, const TensorPtr<T>& m, const TensorPtr<T>& v) {
    detail::require_matrix(m, "add_bias");
    if (v->rank() != 1 || v->shape[0] != m->shape[1]) {
        throw ShapeError("add_bias: bias " + shape_str(v->shape) + " does not match columns of " +
                         shape_str(m->shape));
    }
    const std::size_t R = m->shape[0], C = m->shape[1];
    auto out = make_tensor<T>(m->shape);
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) out->data[i * C + j] = m->data[i * C + j] + v->data[j];
    if (tape.enabled() && (m->requires_grad || v->requires_grad)) {
        out->requires_grad = true;
        tape.record([m, v, out, R, C]() {
            if (out->grad.empty()) return;
            if (m->requires_grad) {
                m->ensure_grad();
                for (std::size_t i = 0; i < R * C; ++i) m->grad[i] += out->grad[i];
            }
            if (v->requires_grad) {
                v->ensure_grad();
                for (std::size_t i = 0; i < R; ++i)
                    for (std::size_t j = 0; j < C; ++j) v->grad[j] += out->grad[i * C + j];
            }
        });
    }
    return out;
}

// Same data, new extents.
template <typename T>
TensorPtr<T> reshape(Tape<T>& tape, const TensorPtr<T>& x, Shape new_shape) {
    if (shape_numel(new_shape) != x->numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(new_shape));
    }
    auto out = make_tensor<T>(std::move(new_shape));
    out->data = x->data;
    if (tracing(tape, x)) {
        out->requires_grad = true;
        tape.record([x, out]() {
            if (out->grad.empty()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += out->grad[i];
        });
    }
    return out;
}

}  // namespace fernnet
