#pragma once

#include <cstdint>

#include "fernnet/spatial.hpp"

namespace fernnet {

// How the scalar instance weight is derived from the tanh responses c.
//   LiteralL2            w = ||abs(c) - 1||_2          (0 when saturated)
//   NormalizedProximity  w = 1 - ||abs(c) - 1||_2 / sqrt(m)   (1 when saturated)
//   MeanL1Proximity      w = 1 - mean(1 - |c_j|)              (1 when saturated)
enum class WeightMode { LiteralL2, NormalizedProximity, MeanL1Proximity };

inline const char* weight_mode_name(WeightMode m) {
    switch (m) {
        case WeightMode::LiteralL2: return "literal_l2";
        case WeightMode::NormalizedProximity: return "normalized_proximity";
        case WeightMode::MeanL1Proximity: return "mean_l1";
    }
    return "?";
}

inline WeightMode weight_mode_from_name(const std::string& s) {
    if (s == "literal_l2") return WeightMode::LiteralL2;
    if (s == "normalized_proximity") return WeightMode::NormalizedProximity;
    if (s == "mean_l1") return WeightMode::MeanL1Proximity;
    throw ConfigError("unknown weight mode '" + s + "'");
}

struct FernConfig {
    std::size_t ferns = 24;   // K
    std::size_t depth = 3;    // m, number of binary tests -> 2^m cells
    std::size_t in_dim = 1;   // UFM column count the split dimensions index into
    std::size_t c_out = 1;    // embedding width
    WeightMode weight_mode = WeightMode::LiteralL2;
    bool thresholds_trainable = true;
    std::uint64_t seed = 0;

    std::size_t cells() const { return std::size_t{1} << depth; }
    std::size_t lut_rows() const { return ferns * cells(); }

    void validate() const {
        if (ferns < 1) throw ConfigError("fern config: ferns must be >= 1");
        if (depth < 1 || depth > 24) throw ConfigError("fern config: depth must be in [1, 24]");
        if (in_dim < 1) throw ConfigError("fern config: in_dim must be >= 1");
        if (c_out < 1) throw ConfigError("fern config: c_out must be >= 1");
    }
};

// One ensemble of K ferns sharing a single LUT. Split dimensions are drawn
// once at init and never trained; thresholds and LUT rows are parameters.
template <typename T>
struct FernEnsembleLayer {
    FernConfig config;
    std::vector<std::int64_t> dims;     // K*m entries in [0, in_dim)
    std::vector<std::int64_t> offsets;  // per-fern base row, offsets[k] = k * 2^m
    TensorPtr<T> thresholds;            // K x m
    TensorPtr<T> lut;                   // (K * 2^m) x c_out
};

// Draw order is fixed (dims, thresholds, lut) so a seed pins the layer bits.
template <typename T>
FernEnsembleLayer<T> fern_init(const FernConfig& config) {
    config.validate();
    FernEnsembleLayer<T> layer;
    layer.config = config;
    Rng rng(config.seed);
    const std::size_t K = config.ferns, m = config.depth;
    layer.dims.resize(K * m);
    for (auto& d : layer.dims) d = rng.uniform_int(0, static_cast<std::int64_t>(config.in_dim));
    layer.offsets.resize(K);
    for (std::size_t k = 0; k < K; ++k)
        layer.offsets[k] = static_cast<std::int64_t>(k * config.cells());
    layer.thresholds = randn<T>({K, m}, rng);
    layer.thresholds->requires_grad = config.thresholds_trainable;
    layer.thresholds->ensure_grad();
    const T sigma = static_cast<T>(1.0 / std::sqrt(static_cast<double>(K)));
    layer.lut = randn<T>({config.lut_rows(), config.c_out}, rng, sigma);
    layer.lut->requires_grad = true;
    layer.lut->ensure_grad();
    return layer;
}

// c_j = tanh(row[d_j] - t_j) for fern k.
template <typename T>
void fern_response_row(const T* row, const FernEnsembleLayer<T>& layer, std::size_t k, T* c) {
    const std::size_t m = layer.config.depth;
    const std::int64_t* d = layer.dims.data() + k * m;
    const T* t = layer.thresholds->data.data() + k * m;
    for (std::size_t j = 0; j < m; ++j) c[j] = std::tanh(row[d[j]] - t[j]);
}

// All-fern response of a single UFM row, K x m. Convenience wrapper.
template <typename T>
TensorPtr<T> fern_response(const TensorPtr<T>& row, const FernEnsembleLayer<T>& layer) {
    if (row->numel() != layer.config.in_dim) {
        throw ShapeError("fern_response: row length " + std::to_string(row->numel()) +
                         " != in_dim " + std::to_string(layer.config.in_dim));
    }
    auto c = make_tensor<T>({layer.config.ferns, layer.config.depth});
    for (std::size_t k = 0; k < layer.config.ferns; ++k)
        fern_response_row(row->data.data(), layer, k, c->data.data() + k * layer.config.depth);
    return c;
}

// Sign bits of c assembled MSB-first (the first test is the most significant
// bit, sign(0) -> 0), plus the fern's base offset. Integer-only: comparisons,
// shifts and adds. Carries no gradient.
template <typename T>
std::int64_t index_encode(const T* c, std::size_t m, std::int64_t offset) {
    std::int64_t bits = 0;
    for (std::size_t j = 0; j < m; ++j) bits = (bits << 1) | (c[j] > T(0) ? 1 : 0);
    return offset + bits;
}

template <typename T>
std::vector<std::int64_t> index_encode(const TensorPtr<T>& c, const FernEnsembleLayer<T>& layer) {
    const std::size_t K = layer.config.ferns, m = layer.config.depth;
    std::vector<std::int64_t> idx(K);
    for (std::size_t k = 0; k < K; ++k)
        idx[k] = index_encode(c->data.data() + k * m, m, layer.offsets[k]);
    return idx;
}

template <typename T>
T instance_weight(const T* c, std::size_t m, WeightMode mode) {
    switch (mode) {
        case WeightMode::LiteralL2:
        case WeightMode::NormalizedProximity: {
            T s = T(0);
            for (std::size_t j = 0; j < m; ++j) {
                const T d = std::abs(c[j]) - T(1);
                s += d * d;
            }
            const T norm = std::sqrt(s);
            if (mode == WeightMode::LiteralL2) return norm;
            return T(1) - norm / std::sqrt(static_cast<T>(m));
        }
        case WeightMode::MeanL1Proximity: {
            T s = T(0);
            for (std::size_t j = 0; j < m; ++j) s += T(1) - std::abs(c[j]);
            return T(1) - s / static_cast<T>(m);
        }
    }
    throw ConfigError("instance_weight: unknown weight mode");
}

namespace detail {

template <typename T>
T sgn0(T v) {
    return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));  // subgradient 0 at the |.| kink
}

// Accumulates upstream * dw/dc_j into dc. The L2 modes share the norm; its
// derivative is defined as 0 at norm == 0 (fully saturated fern).
template <typename T>
void instance_weight_grad(const T* c, std::size_t m, WeightMode mode, T upstream, T* dc) {
    switch (mode) {
        case WeightMode::LiteralL2:
        case WeightMode::NormalizedProximity: {
            T s = T(0);
            for (std::size_t j = 0; j < m; ++j) {
                const T d = std::abs(c[j]) - T(1);
                s += d * d;
            }
            const T norm = std::sqrt(s);
            if (norm == T(0)) return;
            T scale = upstream / norm;
            if (mode == WeightMode::NormalizedProximity) scale = -scale / std::sqrt(static_cast<T>(m));
            for (std::size_t j = 0; j < m; ++j)
                dc[j] += scale * (std::abs(c[j]) - T(1)) * sgn0(c[j]);
            return;
        }
        case WeightMode::MeanL1Proximity: {
            const T scale = upstream / static_cast<T>(m);
            for (std::size_t j = 0; j < m; ++j) dc[j] += scale * sgn0(c[j]);
            return;
        }
    }
    throw ConfigError("instance_weight_grad: unknown weight mode");
}

}  // namespace detail

// Everything backward needs, cached per forward pass.
template <typename T>
struct FernForwardContext {
    std::size_t rows = 0;
    std::vector<T> c;                   // rows * K * m
    std::vector<std::int64_t> indices;  // rows * K, absolute LUT rows
    std::vector<T> weights;             // rows * K
};

// out must be zero-initialized, rows x c_out.
template <typename T>
void fern_forward_raw(const T* rows, std::size_t R, const FernEnsembleLayer<T>& layer, T* out,
                      FernForwardContext<T>& ctx) {
    const auto& cfg = layer.config;
    const std::size_t K = cfg.ferns, m = cfg.depth, D = cfg.in_dim, C = cfg.c_out;
    ctx.rows = R;
    ctx.c.resize(R * K * m);
    ctx.indices.resize(R * K);
    ctx.weights.resize(R * K);
    const T* lut = layer.lut->data.data();
    for (std::size_t u = 0; u < R; ++u) {
        const T* row = rows + u * D;
        T* orow = out + u * C;
        for (std::size_t k = 0; k < K; ++k) {
            T* c = ctx.c.data() + (u * K + k) * m;
            fern_response_row(row, layer, k, c);
            const std::int64_t idx = index_encode(c, m, layer.offsets[k]);
            const T w = instance_weight(c, m, cfg.weight_mode);
            ctx.indices[u * K + k] = idx;
            ctx.weights[u * K + k] = w;
            const T* lrow = lut + static_cast<std::size_t>(idx) * C;
            for (std::size_t j = 0; j < C; ++j) orow[j] += w * lrow[j];
        }
    }
}

// Gradients: LUT rows get the scatter-added w * g; thresholds and input rows
// get the chain through the instance weight and the tanh. The discrete index
// path carries nothing. Null destinations are skipped.
template <typename T>
void fern_backward_raw(const FernForwardContext<T>& ctx, const T* grad_out,
                       const FernEnsembleLayer<T>& layer, std::type_identity_t<T>* grad_lut,
                       std::type_identity_t<T>* grad_thresholds,
                       std::type_identity_t<T>* grad_rows) {
    const auto& cfg = layer.config;
    const std::size_t K = cfg.ferns, m = cfg.depth, D = cfg.in_dim, C = cfg.c_out;
    if (ctx.rows * K != ctx.indices.size()) {
        throw ContractError("fern_backward: context does not match layer configuration");
    }
    const T* lut = layer.lut->data.data();
    std::vector<T> dc(m);
    for (std::size_t u = 0; u < ctx.rows; ++u) {
        const T* g = grad_out + u * C;
        for (std::size_t k = 0; k < K; ++k) {
            const std::int64_t idx = ctx.indices[u * K + k];
            const T w = ctx.weights[u * K + k];
            const T* lrow = lut + static_cast<std::size_t>(idx) * C;
            T dw = T(0);
            for (std::size_t j = 0; j < C; ++j) dw += lrow[j] * g[j];
            if (grad_lut) {
                T* glrow = grad_lut + static_cast<std::size_t>(idx) * C;
                for (std::size_t j = 0; j < C; ++j) glrow[j] += w * g[j];
            }
            if (!grad_thresholds && !grad_rows) continue;
            const T* c = ctx.c.data() + (u * K + k) * m;
            std::fill(dc.begin(), dc.end(), T(0));
            detail::instance_weight_grad(c, m, cfg.weight_mode, dw, dc.data());
            const std::int64_t* d = layer.dims.data() + k * m;
            for (std::size_t j = 0; j < m; ++j) {
                const T dpre = dc[j] * (T(1) - c[j] * c[j]);
                if (grad_thresholds) grad_thresholds[k * m + j] -= dpre;
                if (grad_rows) grad_rows[u * D + static_cast<std::size_t>(d[j])] += dpre;
            }
        }
    }
}

// Taped ensemble forward over a whole UFM. Returns rows x c_out.
template <typename T>
TensorPtr<T> fern_forward(Tape<T>& tape, const TensorPtr<T>& ufm_rows, FernEnsembleLayer<T>& layer,
                          FernForwardContext<T>* ctx_out = nullptr) {
    detail::require_matrix(ufm_rows, "fern_forward");
    if (ufm_rows->shape[1] != layer.config.in_dim) {
        throw ShapeError("fern_forward: UFM has " + std::to_string(ufm_rows->shape[1]) +
                         " columns, layer expects " + std::to_string(layer.config.in_dim));
    }
    const std::size_t R = ufm_rows->shape[0];
    auto out = make_tensor<T>({R, layer.config.c_out});
    auto ctx = std::make_shared<FernForwardContext<T>>();
    fern_forward_raw(ufm_rows->data.data(), R, layer, out->data.data(), *ctx);
    if (ctx_out) *ctx_out = *ctx;
    const bool needs = tape.enabled() && (layer.lut->requires_grad ||
                                          layer.thresholds->requires_grad || ufm_rows->requires_grad);
    if (needs) {
        out->requires_grad = true;
        auto lut = layer.lut;
        auto thr = layer.thresholds;
        // Copy of the parameter metadata; shares the parameter tensors.
        FernEnsembleLayer<T> snapshot = layer;
        tape.record([ufm_rows, out, ctx, lut, thr, snapshot = std::move(snapshot)]() {
            if (out->grad.empty()) return;
            T* glut = nullptr;
            T* gthr = nullptr;
            T* grows = nullptr;
            if (lut->requires_grad) {
                lut->ensure_grad();
                glut = lut->grad.data();
            }
            if (thr->requires_grad) {
                thr->ensure_grad();
                gthr = thr->grad.data();
            }
            if (ufm_rows->requires_grad) {
                ufm_rows->ensure_grad();
                grows = ufm_rows->grad.data();
            }
            fern_backward_raw(*ctx, out->grad.data(), snapshot, glut, gthr, grows);
        });
    }
    return out;
}

// Drop-in convolution: unfold -> fern ensemble -> fold. Output shape matches
// a convolution with the same geometry.
template <typename T>
TensorPtr<T> fern_conv_layer(Tape<T>& tape, const TensorPtr<T>& input, FernEnsembleLayer<T>& layer,
                             std::size_t k, std::size_t stride, std::size_t padding) {
    if (input->rank() != 4) {
        throw ShapeError("fern_conv_layer: expected NCHW input, got " + shape_str(input->shape));
    }
    const std::size_t expected = input->shape[1] * k * k;
    if (layer.config.in_dim != expected) {
        throw ShapeError("fern_conv_layer: layer in_dim " + std::to_string(layer.config.in_dim) +
                         " != C*k*k = " + std::to_string(expected));
    }
    auto uf = unfold(tape, input, k, stride, padding);
    auto rows = fern_forward(tape, uf.rows, layer);
    return fold(tape, rows, uf.geom);
}

}  // namespace fernnet
