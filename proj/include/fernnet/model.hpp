#pragma once

#include <optional>
#include <string>

#include "fernnet/fern.hpp"
#include "fernnet/layers.hpp"

namespace fernnet {

enum class Backbone { Fern, Conv, BinConv };

inline const char* backbone_name(Backbone b) {
    switch (b) {
        case Backbone::Fern: return "fern";
        case Backbone::Conv: return "conv";
        case Backbone::BinConv: return "binconv";
    }
    return "?";
}

inline Backbone backbone_from_name(const std::string& s) {
    if (s == "fern") return Backbone::Fern;
    if (s == "conv") return Backbone::Conv;
    if (s == "binconv") return Backbone::BinConv;
    throw ConfigError("unknown backbone '" + s + "'");
}

enum class NormKind { None, BatchNorm };

// One stage of the architecture: either a conv-shaped backbone stage or a
// global average pool.
struct LayerSpec {
    enum class Kind { Backbone, Pool } kind = Kind::Backbone;
    std::size_t c_in = 0, c_out = 0, k = 1, stride = 1, padding = 0;
    NormKind norm = NormKind::None;
    std::optional<Backbone> backbone_override;

    static LayerSpec pool() {
        LayerSpec s;
        s.kind = Kind::Pool;
        return s;
    }
    static LayerSpec backbone(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride,
                              std::size_t padding, NormKind norm) {
        LayerSpec s;
        s.c_in = c_in, s.c_out = c_out, s.k = k, s.stride = stride, s.padding = padding;
        s.norm = norm;
        return s;
    }
};

struct ModelConfig {
    std::vector<LayerSpec> layers;
    Backbone backbone = Backbone::Fern;
    std::size_t ferns = 24;
    std::size_t depth = 3;
    WeightMode weight_mode = WeightMode::LiteralL2;
    bool thresholds_trainable = true;
    std::uint64_t seed = 0;
    DType dtype = DType::F32;

    Backbone layer_backbone(std::size_t i) const {
        return layers[i].backbone_override.value_or(backbone);
    }

    // ReLU follows conv-backbone stages that carry a norm; the fern and
    // binary backbones get their non-linearity elsewhere (index binarization
    // and, in the original binary formulation, input binarization).
    bool relu_after(std::size_t i) const {
        return layer_backbone(i) == Backbone::Conv && layers[i].kind == LayerSpec::Kind::Backbone &&
               layers[i].norm == NormKind::BatchNorm;
    }

    void validate() const {
        if (layers.empty()) throw ConfigError("model config: no layers");
        std::size_t channels = 0;
        bool have_channels = false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            if (l.kind == LayerSpec::Kind::Pool) continue;
            if (l.c_in == 0 || l.c_out == 0 || l.k == 0 || l.stride == 0) {
                throw ConfigError("model config: layer " + std::to_string(i + 1) + " has zero extent");
            }
            if (have_channels && l.c_in != channels) {
                throw ConfigError("model config: layer " + std::to_string(i + 1) + " expects " +
                                  std::to_string(l.c_in) + " input channels but previous layer emits " +
                                  std::to_string(channels));
            }
            channels = l.c_out;
            have_channels = true;
        }
    }
};

// The 5-stage patch classifier used throughout: three strided stages with
// batch norm, a global average pool, and a 1x1 classifier head.
inline ModelConfig patch_classifier_config(Backbone backbone, std::size_t in_channels = 3,
                                           std::size_t classes = 2) {
    ModelConfig cfg;
    cfg.backbone = backbone;
    cfg.layers = {
        LayerSpec::backbone(in_channels, 64, 5, 2, 2, NormKind::BatchNorm),
        LayerSpec::backbone(64, 64, 3, 2, 1, NormKind::BatchNorm),
        LayerSpec::backbone(64, 64, 3, 2, 1, NormKind::BatchNorm),
        LayerSpec::pool(),
        LayerSpec::backbone(64, classes, 1, 1, 0, NormKind::None),
    };
    return cfg;
}

template <typename T>
struct NamedParam {
    std::string name;
    TensorPtr<T> tensor;
};

template <typename T>
class Model {
public:
    struct Stage {
        LayerSpec spec;
        Backbone backbone = Backbone::Conv;  // resolved; meaningless for pool
        bool relu = false;
        std::optional<FernEnsembleLayer<T>> fern;
        std::optional<Conv2d<T>> conv;
        std::optional<BinaryConv2d<T>> binconv;
        std::optional<BatchNorm<T>> bn;
    };

    ModelConfig config;
    std::vector<Stage> stages;

    // Forward to logits (N x classes). Flattens whatever spatial extent the
    // last stage leaves.
    TensorPtr<T> forward(Tape<T>& tape, const TensorPtr<T>& input, bool train) {
        TensorPtr<T> x = input;
        for (auto& stage : stages) {
            if (stage.spec.kind == LayerSpec::Kind::Pool) {
                x = adaptive_avg_pool(tape, x);
                continue;
            }
            switch (stage.backbone) {
                case Backbone::Fern:
                    x = fern_conv_layer(tape, x, *stage.fern, stage.spec.k, stage.spec.stride,
                                        stage.spec.padding);
                    break;
                case Backbone::Conv: x = conv2d(tape, x, *stage.conv); break;
                case Backbone::BinConv: x = binary_conv2d(tape, x, *stage.binconv); break;
            }
            if (stage.bn) x = batchnorm(tape, x, *stage.bn, train);
            if (stage.relu) x = relu_op(tape, x);
        }
        const std::size_t n = x->shape[0];
        return reshape(tape, x, {n, x->numel() / n});
    }

    // Trainable tensors, in serialization order.
    std::vector<NamedParam<T>> parameters() {
        std::vector<NamedParam<T>> out;
        for (std::size_t i = 0; i < stages.size(); ++i) {
            auto& s = stages[i];
            const std::string prefix = "layer" + std::to_string(i + 1) + ".";
            if (s.fern) {
                out.push_back({prefix + "lut", s.fern->lut});
                if (s.fern->thresholds->requires_grad)
                    out.push_back({prefix + "thresholds", s.fern->thresholds});
            }
            if (s.conv) {
                out.push_back({prefix + "weight", s.conv->weight});
                if (s.conv->bias) out.push_back({prefix + "bias", s.conv->bias});
            }
            if (s.binconv) {
                out.push_back({prefix + "weight", s.binconv->real_weight});
                if (s.binconv->bias) out.push_back({prefix + "bias", s.binconv->bias});
            }
            if (s.bn) {
                out.push_back({prefix + "bn.gamma", s.bn->gamma});
                out.push_back({prefix + "bn.beta", s.bn->beta});
            }
        }
        return out;
    }

    void zero_grad() {
        for (auto& p : parameters()) p.tensor->zero_grad();
    }
};

template <typename T>
Model<T> build_model(const ModelConfig& config) {
    config.validate();
    Model<T> model;
    model.config = config;
    Rng rng(config.seed);
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        typename Model<T>::Stage stage;
        stage.spec = config.layers[i];
        if (stage.spec.kind == LayerSpec::Kind::Pool) {
            model.stages.push_back(std::move(stage));
            continue;
        }
        stage.backbone = config.layer_backbone(i);
        stage.relu = config.relu_after(i);
        const auto& l = stage.spec;
        switch (stage.backbone) {
            case Backbone::Fern: {
                FernConfig fc;
                fc.ferns = config.ferns;
                fc.depth = config.depth;
                fc.in_dim = l.c_in * l.k * l.k;
                fc.c_out = l.c_out;
                fc.weight_mode = config.weight_mode;
                fc.thresholds_trainable = config.thresholds_trainable;
                fc.seed = rng.next_u64();
                stage.fern = fern_init<T>(fc);
                break;
            }
            case Backbone::Conv:
                stage.conv = conv2d_init<T>(l.c_in, l.c_out, l.k, l.stride, l.padding, rng);
                break;
            case Backbone::BinConv:
                stage.binconv = binary_conv2d_init<T>(l.c_in, l.c_out, l.k, l.stride, l.padding, rng);
                break;
        }
        if (l.norm == NormKind::BatchNorm) stage.bn = batchnorm_init<T>(l.c_out);
        model.stages.push_back(std::move(stage));
    }
    return model;
}

}  // namespace fernnet
