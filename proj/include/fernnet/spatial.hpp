#pragma once

#include "fernnet/ops.hpp"

namespace fernnet {

// Window geometry shared by unfold and fold. Output extents follow the
// usual floor((H + 2p - k)/s) + 1 rule.
struct Geometry {
    std::size_t n = 0, c_in = 0, h = 0, w = 0;
    std::size_t k = 1, stride = 1, padding = 0;
    std::size_t h_out = 0, w_out = 0;

    std::size_t rows() const { return n * h_out * w_out; }
    std::size_t cols() const { return c_in * k * k; }
};

inline Geometry make_geometry(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                              std::size_t k, std::size_t stride, std::size_t padding) {
    if (k < 1 || stride < 1) {
        throw ShapeError("geometry: kernel and stride must be >= 1");
    }
    if (h + 2 * padding < k || w + 2 * padding < k) {
        throw ShapeError("geometry: receptive field " + std::to_string(k) + "x" + std::to_string(k) +
                         " exceeds padded input " + std::to_string(h + 2 * padding) + "x" +
                         std::to_string(w + 2 * padding));
    }
    Geometry g;
    g.n = n, g.c_in = c, g.h = h, g.w = w;
    g.k = k, g.stride = stride, g.padding = padding;
    g.h_out = (h + 2 * padding - k) / stride + 1;
    g.w_out = (w + 2 * padding - k) / stride + 1;
    return g;
}

// im2col result: one row per spatial output position (batch-major, then
// row-major spatial), columns channel-major, then kernel row, then kernel
// column. Fern split dimensions index into this column layout, so the
// ordering is part of the contract.
template <typename T>
struct Unfolded {
    TensorPtr<T> rows;  // (N*Hout*Wout) x (C*k*k)
    Geometry geom;
};

namespace detail {

template <typename T>
void unfold_rows(const T* in, const Geometry& g, T* out) {
    const std::size_t kk = g.k * g.k, D = g.cols();
    for (std::size_t n = 0; n < g.n; ++n) {
        const T* img = in + n * g.c_in * g.h * g.w;
        for (std::size_t y = 0; y < g.h_out; ++y) {
            for (std::size_t x = 0; x < g.w_out; ++x) {
                T* row = out + ((n * g.h_out + y) * g.w_out + x) * D;
                for (std::size_t c = 0; c < g.c_in; ++c) {
                    const T* plane = img + c * g.h * g.w;
                    for (std::size_t ky = 0; ky < g.k; ++ky) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) -
                                                  static_cast<std::ptrdiff_t>(g.padding);
                        for (std::size_t kx = 0; kx < g.k; ++kx) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) -
                                                      static_cast<std::ptrdiff_t>(g.padding);
                            const bool inside = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                                ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w);
                            row[c * kk + ky * g.k + kx] =
                                inside ? plane[static_cast<std::size_t>(iy) * g.w +
                                               static_cast<std::size_t>(ix)]
                                       : T(0);
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add of row gradients back onto the (overlapping) input positions.
template <typename T>
void unfold_scatter(const T* grow, const Geometry& g, T* gin) {
    const std::size_t kk = g.k * g.k, D = g.cols();
    for (std::size_t n = 0; n < g.n; ++n) {
        T* img = gin + n * g.c_in * g.h * g.w;
        for (std::size_t y = 0; y < g.h_out; ++y) {
            for (std::size_t x = 0; x < g.w_out; ++x) {
                const T* row = grow + ((n * g.h_out + y) * g.w_out + x) * D;
                for (std::size_t c = 0; c < g.c_in; ++c) {
                    T* plane = img + c * g.h * g.w;
                    for (std::size_t ky = 0; ky < g.k; ++ky) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) -
                                                  static_cast<std::ptrdiff_t>(g.padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                        for (std::size_t kx = 0; kx < g.k; ++kx) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) -
                                                      static_cast<std::ptrdiff_t>(g.padding);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                            plane[static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)] +=
                                row[c * kk + ky * g.k + kx];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

template <typename T>
Unfolded<T> unfold(Tape<T>& tape, const TensorPtr<T>& input, std::size_t k, std::size_t stride,
                   std::size_t padding) {
    if (input->rank() != 4) {
        throw ShapeError("unfold: expected NCHW input, got " + shape_str(input->shape));
    }
    const Geometry g = make_geometry(input->shape[0], input->shape[1], input->shape[2],
                                     input->shape[3], k, stride, padding);
    auto rows = make_tensor<T>({g.rows(), g.cols()});
    detail::unfold_rows(input->data.data(), g, rows->data.data());
    if (tracing(tape, input)) {
        rows->requires_grad = true;
        tape.record([input, rows, g]() {
            if (rows->grad.empty()) return;
            input->ensure_grad();
            detail::unfold_scatter(rows->grad.data(), g, input->grad.data());
        });
    }
    return {rows, g};
}

// Output-side fold: pure reshape of per-position output vectors back to a
// feature map. rows: (N*Hout*Wout) x C_out -> N x C_out x Hout x Wout.
template <typename T>
TensorPtr<T> fold(Tape<T>& tape, const TensorPtr<T>& rows, const Geometry& g) {
    detail::require_matrix(rows, "fold");
    if (rows->shape[0] != g.rows()) {
        throw ShapeError("fold: got " + std::to_string(rows->shape[0]) + " rows, geometry expects " +
                         std::to_string(g.rows()));
    }
    const std::size_t C = rows->shape[1], HW = g.h_out * g.w_out;
    auto out = make_tensor<T>({g.n, C, g.h_out, g.w_out});
    for (std::size_t n = 0; n < g.n; ++n)
        for (std::size_t p = 0; p < HW; ++p)
            for (std::size_t c = 0; c < C; ++c)
                out->data[(n * C + c) * HW + p] = rows->data[(n * HW + p) * C + c];
    if (tracing(tape, rows)) {
        out->requires_grad = true;
        tape.record([rows, out, g, C, HW]() {
            if (out->grad.empty()) return;
            rows->ensure_grad();
            for (std::size_t n = 0; n < g.n; ++n)
                for (std::size_t p = 0; p < HW; ++p)
                    for (std::size_t c = 0; c < C; ++c)
                        rows->grad[(n * HW + p) * C + c] += out->grad[(n * C + c) * HW + p];
        });
    }
    return out;
}

}  // namespace fernnet
