#pragma once

#include "fernnet/model.hpp"

namespace fernnet {

enum class OptimKind { SGD, Adam };

inline const char* optim_name(OptimKind k) {
    return k == OptimKind::SGD ? "sgd" : "adam";
}

inline OptimKind optim_from_name(const std::string& s) {
    if (s == "sgd") return OptimKind::SGD;
    if (s == "adam") return OptimKind::Adam;
    throw ConfigError("unknown optimizer '" + s + "'");
}

struct TrainConfig {
    OptimKind optimizer = OptimKind::Adam;
    double lr = 1e-3;
    double momentum = 0.9;  // SGD
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (lr <= 0) throw ConfigError("train config: lr must be > 0");
        if (batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
    }
};

template <typename T>
class Optimizer {
public:
    Optimizer(std::vector<TensorPtr<T>> params, const TrainConfig& cfg)
        : params_(std::move(params)), cfg_(cfg) {
        slot0_.resize(params_.size());
        slot1_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            slot0_[i].assign(params_[i]->numel(), T(0));
            slot1_[i].assign(params_[i]->numel(), T(0));
        }
    }

    void step() {
        ++t_;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = *params_[i];
            p.ensure_grad();
            switch (cfg_.optimizer) {
                case OptimKind::SGD: {
                    auto& vel = slot0_[i];
                    const T lr = static_cast<T>(cfg_.lr), mom = static_cast<T>(cfg_.momentum);
                    for (std::size_t j = 0; j < p.numel(); ++j) {
                        vel[j] = p.grad[j] + mom * vel[j];
                        p.data[j] -= lr * vel[j];
                    }
                    break;
                }
                case OptimKind::Adam: {
                    auto& m = slot0_[i];
                    auto& v = slot1_[i];
                    const T lr = static_cast<T>(cfg_.lr);
                    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
                    const T eps = static_cast<T>(cfg_.adam_eps);
                    const T c1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, t_));
                    const T c2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, t_));
                    for (std::size_t j = 0; j < p.numel(); ++j) {
                        const T g = p.grad[j];
                        m[j] = b1 * m[j] + (T(1) - b1) * g;
                        v[j] = b2 * v[j] + (T(1) - b2) * g * g;
                        const T mhat = m[j] / c1;
                        const T vhat = v[j] / c2;
                        p.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
                    }
                    break;
                }
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

private:
    std::vector<TensorPtr<T>> params_;
    TrainConfig cfg_;
    std::vector<std::vector<T>> slot0_;  // SGD velocity / Adam first moment
    std::vector<std::vector<T>> slot1_;  // Adam second moment
    int t_ = 0;
};

}  // namespace fernnet
