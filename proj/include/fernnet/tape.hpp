#pragma once

#include <functional>
#include <vector>

#include "fernnet/tensor.hpp"

namespace fernnet {

// Define-by-run gradient tape. Every differentiable op appends one backward
// closure; backward() replays them in reverse recording order, so a node is
// always visited after all of its consumers. Gradient accumulation inside
// the closures is additive by convention (+= into input grads).
template <typename T>
class Tape {
public:
    explicit Tape(bool enabled = true) : enabled_(enabled) {}

    bool enabled() const { return enabled_; }

    void record(std::function<void()> backward_fn) {
        nodes_.push_back(std::move(backward_fn));
    }

    std::size_t node_count() const { return nodes_.size(); }

    void backward(const TensorPtr<T>& loss) {
        if (!loss->is_scalar()) {
            throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss->shape));
        }
        loss->ensure_grad();
        loss->grad[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    void clear() { nodes_.clear(); }

private:
    bool enabled_;
    std::vector<std::function<void()>> nodes_;
};

// True when an op whose inputs include `t` must be recorded on `tape`.
template <typename T>
bool tracing(const Tape<T>& tape, const TensorPtr<T>& t) {
    return tape.enabled() && t->requires_grad;
}

}  // namespace fernnet
