#pragma once

#include "fernnet/tape.hpp"

namespace fernnet {

// Mean negative log-softmax of the true class. Fused op; the backward rule
// is (softmax - onehot) / N.
template <typename T>
TensorPtr<T> softmax_cross_entropy(Tape<T>& tape, const TensorPtr<T>& logits,
                                   const std::vector<int>& labels) {
    if (logits->rank() != 2) {
        throw ShapeError("softmax_cross_entropy: expected NxC logits, got " + shape_str(logits->shape));
    }
    const std::size_t N = logits->shape[0], C = logits->shape[1];
    if (labels.size() != N) {
        throw DataError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(N) + " rows");
    }
    auto softmax = std::make_shared<std::vector<T>>(N * C);
    T total = T(0);
    for (std::size_t i = 0; i < N; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= C) {
            throw DataError("softmax_cross_entropy: label " + std::to_string(label) +
                            " out of range [0, " + std::to_string(C) + ")");
        }
        const T* row = logits->data.data() + i * C;
        T mx = row[0];
        for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, row[j]);
        T z = T(0);
        for (std::size_t j = 0; j < C; ++j) z += std::exp(row[j] - mx);
        const T lse = mx + std::log(z);
        for (std::size_t j = 0; j < C; ++j)
            (*softmax)[i * C + j] = std::exp(row[j] - lse);
        total += lse - row[static_cast<std::size_t>(label)];
    }
    auto out = make_tensor<T>({1});
    out->data[0] = total / static_cast<T>(N);
    if (tracing(tape, logits)) {
        out->requires_grad = true;
        tape.record([logits, out, softmax, labels, N, C]() {
            if (out->grad.empty()) return;
            logits->ensure_grad();
            const T g = out->grad[0] / static_cast<T>(N);
            for (std::size_t i = 0; i < N; ++i) {
                for (std::size_t j = 0; j < C; ++j) {
                    T v = (*softmax)[i * C + j];
                    if (j == static_cast<std::size_t>(labels[i])) v -= T(1);
                    logits->grad[i * C + j] += g * v;
                }
            }
        });
    }
    return out;
}

}  // namespace fernnet
