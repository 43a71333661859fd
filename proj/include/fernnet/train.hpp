#pragma once

#include <chrono>
#include <functional>
#include <ostream>

#include "fernnet/dataset.hpp"
#include "fernnet/loss.hpp"
#include "fernnet/optim.hpp"

namespace fernnet {

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0;
    double test_acc = 0;
    double wall_seconds = 0;
};

namespace detail {

template <typename T>
TensorPtr<T> batch_tensor(const Dataset& ds, const std::vector<std::size_t>& idx, std::size_t begin,
                          std::size_t end) {
    const std::size_t B = end - begin, S = ds.sample_size();
    auto x = make_tensor<T>({B, ds.c, ds.h, ds.w});
    for (std::size_t b = 0; b < B; ++b) {
        const float* src = ds.data.data() + idx[begin + b] * S;
        T* dst = x->data.data() + b * S;
        for (std::size_t i = 0; i < S; ++i) dst[i] = static_cast<T>(src[i]);
    }
    return x;
}

inline std::vector<int> batch_labels(const Dataset& ds, const std::vector<std::size_t>& idx,
                                     std::size_t begin, std::size_t end) {
    std::vector<int> y(end - begin);
    for (std::size_t b = 0; b < y.size(); ++b) y[b] = ds.labels[idx[begin + b]];
    return y;
}

}  // namespace detail

// Fraction of argmax(logits) == label, batched, BN in eval mode.
template <typename T>
double evaluate(Model<T>& model, const Dataset& ds, std::size_t batch_size = 64) {
    if (ds.n == 0) throw DataError("evaluate: empty dataset");
    std::vector<std::size_t> idx(ds.n);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < ds.n; begin += batch_size) {
        const std::size_t end = std::min<std::size_t>(ds.n, begin + batch_size);
        Tape<T> tape(false);
        auto x = detail::batch_tensor<T>(ds, idx, begin, end);
        auto logits = model.forward(tape, x, /*train=*/false);
        const std::size_t C = logits->shape[1];
        for (std::size_t b = 0; b < end - begin; ++b) {
            const T* row = logits->data.data() + b * C;
            std::size_t best = 0;
            for (std::size_t j = 1; j < C; ++j)
                if (row[j] > row[best]) best = j;
            if (best == ds.labels[idx[begin + b]]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.n);
}

// One full training run. Deterministic given the seeds: the shuffle order is
// drawn from TrainConfig.seed, all arithmetic is single-threaded.
// `on_epoch`, when set, sees each epoch's stats and may stop the run early
// by returning false (the CLI streams metrics through it).
template <typename T>
std::vector<EpochStats> train_epochs(
    Model<T>& model, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
    const std::function<bool(const EpochStats&)>& on_epoch = {}) {
    cfg.validate();
    if (train.n == 0) throw DataError("train_epochs: empty training dataset");
    train.validate();
    test.validate();

    std::vector<TensorPtr<T>> params;
    for (auto& p : model.parameters()) params.push_back(p.tensor);
    Optimizer<T> opt(params, cfg);
    Rng shuffle_rng(cfg.seed);

    std::vector<std::size_t> idx(train.n);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    std::vector<EpochStats> history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(idx);
        double loss_sum = 0;
        std::size_t seen = 0;
        for (std::size_t begin = 0; begin < train.n; begin += cfg.batch_size) {
            const std::size_t end = std::min<std::size_t>(train.n, begin + cfg.batch_size);
            auto x = detail::batch_tensor<T>(train, idx, begin, end);
            auto y = detail::batch_labels(train, idx, begin, end);
            Tape<T> tape;
            auto logits = model.forward(tape, x, /*train=*/true);
            auto loss = softmax_cross_entropy(tape, logits, y);
            const double lv = static_cast<double>(loss->data[0]);
            if (!std::isfinite(lv)) {
                throw NumericError("train_epochs: non-finite loss at epoch " +
                                   std::to_string(epoch + 1) + ", sample offset " +
                                   std::to_string(begin));
            }
            loss_sum += lv * static_cast<double>(end - begin);
            seen += end - begin;
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
        }
        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.train_loss = loss_sum / static_cast<double>(seen);
        stats.test_acc = evaluate(model, test);
        stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.push_back(stats);
        if (on_epoch && !on_epoch(stats)) break;
    }
    return history;
}

// ---------------------------------------------------------------------------
// Gradient checking.
// ---------------------------------------------------------------------------

// Central finite differences over every entry of `leaves`, against the
// analytic gradients already stored in leaf->grad. `forward` must recompute
// the scalar loss from the leaves' current data. Error metric:
// |analytic - fd| / max(1, |analytic|).
inline double max_fd_error(const std::vector<TensorPtr<double>>& leaves,
                           const std::function<double()>& forward, double epsilon) {
    double worst = 0;
    for (const auto& leaf : leaves) {
        for (std::size_t i = 0; i < leaf->numel(); ++i) {
            const double saved = leaf->data[i];
            leaf->data[i] = saved + epsilon;
            const double up = forward();
            leaf->data[i] = saved - epsilon;
            const double down = forward();
            leaf->data[i] = saved;
            const double fd = (up - down) / (2 * epsilon);
            const double analytic = i < leaf->grad.size() ? leaf->grad[i] : 0.0;
            const double err = std::abs(analytic - fd) / std::max(1.0, std::abs(analytic));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

enum class FragmentKind { FernLayer, ConvLayer, BatchNormLayer, SoftmaxLoss };

struct GradCheckOutcome {
    double max_rel_err = 0;
    std::size_t resamples = 0;
};

// Checks one small layer fragment of the given kind in f64. For fern
// fragments the input is resampled until every tanh response keeps at least
// `margin` distance from its sign flip; the index is discontinuous there by
// design and finite differences are meaningless across the jump.
GradCheckOutcome grad_check_fragment(FragmentKind kind, WeightMode mode, std::uint64_t seed,
                                     double margin, double epsilon);

}  // namespace fernnet
