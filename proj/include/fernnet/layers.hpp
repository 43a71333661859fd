#pragma once

#include "fernnet/spatial.hpp"

namespace fernnet {

// ---------------------------------------------------------------------------
// Batch normalization over NCHW channels.
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNorm {
    TensorPtr<T> gamma;  // C
    TensorPtr<T> beta;   // C
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T momentum = T(0.1);
    T epsilon = T(1e-5);
};

template <typename T>
BatchNorm<T> batchnorm_init(std::size_t channels) {
    BatchNorm<T> bn;
    bn.gamma = make_param<T>({channels}, std::vector<T>(channels, T(1)));
    bn.beta = make_param<T>({channels}, std::vector<T>(channels, T(0)));
    bn.running_mean.assign(channels, T(0));
    bn.running_var.assign(channels, T(1));
    return bn;
}

// Train mode normalizes by batch statistics (biased variance) and updates the
// running buffers; eval mode is the frozen affine map from the running stats.
template <typename T>
TensorPtr<T> batchnorm(Tape<T>& tape, const TensorPtr<T>& x, BatchNorm<T>& state, bool train) {
    if (x->rank() != 4) {
        throw ShapeError("batchnorm: expected NCHW input, got " + shape_str(x->shape));
    }
    const std::size_t N = x->shape[0], C = x->shape[1], HW = x->shape[2] * x->shape[3];
    if (C != state.gamma->numel()) {
        throw ShapeError("batchnorm: input has " + std::to_string(C) + " channels, state has " +
                         std::to_string(state.gamma->numel()));
    }
    if (train && N == 0) throw ContractError("batchnorm: zero batch in train mode");

    const std::size_t M = N * HW;
    auto mean = std::make_shared<std::vector<T>>(C, T(0));
    auto inv_std = std::make_shared<std::vector<T>>(C, T(0));
    if (train) {
        for (std::size_t c = 0; c < C; ++c) {
            T s = T(0);
            for (std::size_t n = 0; n < N; ++n) {
                const T* p = x->data.data() + (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) s += p[i];
            }
            const T mu = s / static_cast<T>(M);
            T v = T(0);
            for (std::size_t n = 0; n < N; ++n) {
                const T* p = x->data.data() + (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) {
                    const T d = p[i] - mu;
                    v += d * d;
                }
            }
            v /= static_cast<T>(M);
            (*mean)[c] = mu;
            (*inv_std)[c] = T(1) / std::sqrt(v + state.epsilon);
            state.running_mean[c] = (T(1) - state.momentum) * state.running_mean[c] + state.momentum * mu;
            state.running_var[c] = (T(1) - state.momentum) * state.running_var[c] + state.momentum * v;
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            (*mean)[c] = state.running_mean[c];
            (*inv_std)[c] = T(1) / std::sqrt(state.running_var[c] + state.epsilon);
        }
    }

    auto out = make_tensor<T>(x->shape);
    auto xhat = std::make_shared<std::vector<T>>(x->numel());
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            const T* p = x->data.data() + (n * C + c) * HW;
            T* h = xhat->data() + (n * C + c) * HW;
            T* o = out->data.data() + (n * C + c) * HW;
            const T mu = (*mean)[c], is = (*inv_std)[c];
            const T g = state.gamma->data[c], b = state.beta->data[c];
            for (std::size_t i = 0; i < HW; ++i) {
                h[i] = (p[i] - mu) * is;
                o[i] = g * h[i] + b;
            }
        }
    }

    auto gamma = state.gamma;
    auto beta = state.beta;
    const bool needs = tape.enabled() &&
                       (x->requires_grad || gamma->requires_grad || beta->requires_grad);
    if (needs) {
        out->requires_grad = true;
        tape.record([x, out, gamma, beta, xhat, inv_std, train, N, C, HW]() {
            if (out->grad.empty()) return;
            const std::size_t M = N * HW;
            for (std::size_t c = 0; c < C; ++c) {
                T sum_g = T(0), sum_gh = T(0);
                for (std::size_t n = 0; n < N; ++n) {
                    const T* g = out->grad.data() + (n * C + c) * HW;
                    const T* h = xhat->data() + (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        sum_g += g[i];
                        sum_gh += g[i] * h[i];
                    }
                }
                if (gamma->requires_grad) {
                    gamma->ensure_grad();
                    gamma->grad[c] += sum_gh;
                }
                if (beta->requires_grad) {
                    beta->ensure_grad();
                    beta->grad[c] += sum_g;
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    const T scale = gamma->data[c] * (*inv_std)[c];
                    const T mg = sum_g / static_cast<T>(M);
                    const T mgh = sum_gh / static_cast<T>(M);
                    for (std::size_t n = 0; n < N; ++n) {
                        const T* g = out->grad.data() + (n * C + c) * HW;
                        const T* h = xhat->data() + (n * C + c) * HW;
                        T* gx = x->grad.data() + (n * C + c) * HW;
                        if (train) {
                            for (std::size_t i = 0; i < HW; ++i)
                                gx[i] += scale * (g[i] - mg - h[i] * mgh);
                        } else {
                            for (std::size_t i = 0; i < HW; ++i) gx[i] += scale * g[i];
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Global average pooling to 1x1.
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> adaptive_avg_pool(Tape<T>& tape, const TensorPtr<T>& x) {
    if (x->rank() != 4) {
        throw ShapeError("adaptive_avg_pool: expected NCHW input, got " + shape_str(x->shape));
    }
    const std::size_t N = x->shape[0], C = x->shape[1], HW = x->shape[2] * x->shape[3];
    auto out = make_tensor<T>({N, C, 1, 1});
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        T s = T(0);
        const T* p = x->data.data() + nc * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
        out->data[nc] = s / static_cast<T>(HW);
    }
    if (tracing(tape, x)) {
        out->requires_grad = true;
        tape.record([x, out, N, C, HW]() {
            if (out->grad.empty()) return;
            x->ensure_grad();
            for (std::size_t nc = 0; nc < N * C; ++nc) {
                const T g = out->grad[nc] / static_cast<T>(HW);
                T* gx = x->grad.data() + nc * HW;
                for (std::size_t i = 0; i < HW; ++i) gx[i] += g;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Floating point convolution, lowered through unfold / matmul / fold.
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2d {
    TensorPtr<T> weight;  // C_out x (C_in * k * k)
    TensorPtr<T> bias;    // C_out, may be null
    std::size_t k = 1, stride = 1, padding = 0;
};

template <typename T>
Conv2d<T> conv2d_init(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride,
                      std::size_t padding, Rng& rng, bool with_bias = true) {
    Conv2d<T> conv;
    conv.k = k, conv.stride = stride, conv.padding = padding;
    const std::size_t fan_in = c_in * k * k;
    const T sigma = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
    conv.weight = randn<T>({c_out, fan_in}, rng, sigma);
    conv.weight->requires_grad = true;
    conv.weight->ensure_grad();
    if (with_bias) conv.bias = make_param<T>({c_out}, std::vector<T>(c_out, T(0)));
    return conv;
}

template <typename T>
TensorPtr<T> conv2d_with_weight(Tape<T>& tape, const TensorPtr<T>& input, const TensorPtr<T>& weight,
                                const std::type_identity_t<TensorPtr<T>>& bias, std::size_t k,
                                std::size_t stride, std::size_t padding) {
    if (input->rank() != 4) {
        throw ShapeError("conv2d: expected NCHW input, got " + shape_str(input->shape));
    }
    if (weight->shape[1] != input->shape[1] * k * k) {
        throw ShapeError("conv2d: weight columns " + std::to_string(weight->shape[1]) +
                         " != C*k*k = " + std::to_string(input->shape[1] * k * k));
    }
    auto uf = unfold(tape, input, k, stride, padding);
    auto rows = matmul(tape, uf.rows, transpose(tape, weight));
    if (bias) rows = add_bias(tape, rows, bias);
    return fold(tape, rows, uf.geom);
}

template <typename T>
TensorPtr<T> conv2d(Tape<T>& tape, const TensorPtr<T>& input, const Conv2d<T>& params) {
    return conv2d_with_weight(tape, input, params.weight, params.bias, params.k, params.stride,
                              params.padding);
}

// ---------------------------------------------------------------------------
// Weight-binarized convolution baseline. Forward runs a convolution with
// alpha[o] * sign(real_weight[o]); backward reaches real_weight through a
// straight-through estimator clipped at |real_weight| <= 1. Activations stay
// in floating point.
// ---------------------------------------------------------------------------

template <typename T>
struct BinaryConv2d {
    TensorPtr<T> real_weight;  // latent C_out x (C_in * k * k)
    TensorPtr<T> bias;
    std::size_t k = 1, stride = 1, padding = 0;
};

template <typename T>
BinaryConv2d<T> binary_conv2d_init(std::size_t c_in, std::size_t c_out, std::size_t k,
                                   std::size_t stride, std::size_t padding, Rng& rng,
                                   bool with_bias = true) {
    auto conv = conv2d_init<T>(c_in, c_out, k, stride, padding, rng, with_bias);
    BinaryConv2d<T> bc;
    bc.real_weight = conv.weight;
    bc.bias = conv.bias;
    bc.k = k, bc.stride = stride, bc.padding = padding;
    return bc;
}

// alpha[o] = mean |real_weight[o, :]|; sign(0) counts as +1.
template <typename T>
void binarize_weight(const TensorPtr<T>& real, std::vector<T>& alpha, TensorPtr<T>& effective) {
    const std::size_t C = real->shape[0], D = real->shape[1];
    alpha.assign(C, T(0));
    effective = make_tensor<T>(real->shape);
    for (std::size_t o = 0; o < C; ++o) {
        T s = T(0);
        for (std::size_t i = 0; i < D; ++i) s += std::abs(real->data[o * D + i]);
        alpha[o] = s / static_cast<T>(D);
        for (std::size_t i = 0; i < D; ++i) {
            const T sign = real->data[o * D + i] < T(0) ? T(-1) : T(1);
            effective->data[o * D + i] = alpha[o] * sign;
        }
    }
}

template <typename T>
TensorPtr<T> binary_conv2d(Tape<T>& tape, const TensorPtr<T>& input, const BinaryConv2d<T>& params) {
    std::vector<T> alpha;
    TensorPtr<T> effective;
    binarize_weight(params.real_weight, alpha, effective);
    auto real = params.real_weight;
    if (tape.enabled() && real->requires_grad) {
        effective->requires_grad = true;
        // Recorded before the convolution ops, so it replays after them and
        // sees the accumulated effective-weight gradient.
        tape.record([real, effective]() {
            if (effective->grad.empty()) return;
            real->ensure_grad();
            for (std::size_t i = 0; i < real->numel(); ++i)
                if (std::abs(real->data[i]) <= T(1)) real->grad[i] += effective->grad[i];
        });
    }
    return conv2d_with_weight(tape, input, effective, params.bias, params.k, params.stride,
                              params.padding);
}

}  // namespace fernnet
