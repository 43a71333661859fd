#include "fernnet/train.hpp"

namespace fernnet {

namespace {

using T = double;

// Scalar projection loss: sum(output * fixed random matrix). Keeps every
// output element in play with distinct coefficients.
T projected(const TensorPtr<T>& out, const TensorPtr<T>& proj) {
    T s = 0;
    for (std::size_t i = 0; i < out->numel(); ++i) s += out->data[i] * proj->data[i];
    return s;
}

GradCheckOutcome check_fern(WeightMode mode, std::uint64_t seed, double margin, double epsilon) {
    Rng rng(seed);
    FernConfig fc;
    fc.ferns = 4;
    fc.depth = 3;
    fc.in_dim = 18;
    fc.c_out = 5;
    fc.weight_mode = mode;
    fc.thresholds_trainable = true;
    fc.seed = rng.next_u64();
    auto layer = fern_init<T>(fc);
    const std::size_t R = 6;
    auto proj = randn<T>({R, fc.c_out}, rng);

    GradCheckOutcome outcome;
    TensorPtr<T> input;
    for (std::size_t attempt = 0;; ++attempt) {
        if (attempt >= 1000) {
            throw SamplingError("grad_check: no sample kept all responses " + std::to_string(margin) +
                                " away from a sign flip in 1000 draws");
        }
        input = randn<T>({R, fc.in_dim}, rng);
        bool ok = true;
        std::vector<T> c(fc.depth);
        for (std::size_t u = 0; u < R && ok; ++u) {
            for (std::size_t k = 0; k < fc.ferns && ok; ++k) {
                fern_response_row(input->data.data() + u * fc.in_dim, layer, k, c.data());
                for (std::size_t j = 0; j < fc.depth; ++j) {
                    if (std::abs(c[j]) < margin) {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if (ok) break;
        ++outcome.resamples;
    }
    input->requires_grad = true;
    input->ensure_grad();

    layer.lut->zero_grad();
    layer.thresholds->zero_grad();
    Tape<T> tape;
    auto out = fern_forward(tape, input, layer);
    auto loss = reduce(tape, mul(tape, out, proj), ReduceKind::Sum);
    tape.backward(loss);

    auto forward = [&]() {
        Tape<T> fwd(false);
        auto y = fern_forward(fwd, input, layer);
        return projected(y, proj);
    };
    outcome.max_rel_err =
        max_fd_error({layer.lut, layer.thresholds, input}, forward, epsilon);
    return outcome;
}

GradCheckOutcome check_conv(std::uint64_t seed, double epsilon) {
    Rng rng(seed);
    auto conv = conv2d_init<T>(3, 4, 3, 2, 1, rng);
    auto input = randn<T>({2, 3, 7, 7}, rng);
    input->requires_grad = true;
    input->ensure_grad();
    Tape<T> probe(false);
    auto shape_probe = conv2d(probe, input, conv);
    auto proj = randn<T>(shape_probe->shape, rng);

    conv.weight->zero_grad();
    conv.bias->zero_grad();
    Tape<T> tape;
    auto out = conv2d(tape, input, conv);
    auto loss = reduce(tape, mul(tape, out, proj), ReduceKind::Sum);
    tape.backward(loss);

    auto forward = [&]() {
        Tape<T> fwd(false);
        return projected(conv2d(fwd, input, conv), proj);
    };
    GradCheckOutcome outcome;
    outcome.max_rel_err = max_fd_error({conv.weight, conv.bias, input}, forward, epsilon);
    return outcome;
}

GradCheckOutcome check_batchnorm(std::uint64_t seed, double epsilon) {
    Rng rng(seed);
    auto bn = batchnorm_init<T>(4);
    // Non-trivial scale/shift so the gradient paths are all exercised.
    for (std::size_t c = 0; c < 4; ++c) {
        bn.gamma->data[c] = T(0.5) + rng.uniform();
        bn.beta->data[c] = rng.normal();
    }
    auto input = randn<T>({3, 4, 5, 5}, rng);
    input->requires_grad = true;
    input->ensure_grad();
    auto proj = randn<T>(input->shape, rng);

    bn.gamma->zero_grad();
    bn.beta->zero_grad();
    Tape<T> tape;
    auto out = batchnorm(tape, input, bn, /*train=*/true);
    auto loss = reduce(tape, mul(tape, out, proj), ReduceKind::Sum);
    tape.backward(loss);

    auto forward = [&]() {
        Tape<T> fwd(false);
        return projected(batchnorm(fwd, input, bn, /*train=*/true), proj);
    };
    GradCheckOutcome outcome;
    outcome.max_rel_err = max_fd_error({bn.gamma, bn.beta, input}, forward, epsilon);
    return outcome;
}

GradCheckOutcome check_loss(std::uint64_t seed, double epsilon) {
    Rng rng(seed);
    auto logits = randn<T>({5, 2}, rng);
    logits->requires_grad = true;
    logits->ensure_grad();
    std::vector<int> labels(5);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_int(0, 2));

    Tape<T> tape;
    auto loss = softmax_cross_entropy(tape, logits, labels);
    tape.backward(loss);

    auto forward = [&]() {
        Tape<T> fwd(false);
        return softmax_cross_entropy(fwd, logits, labels)->data[0];
    };
    GradCheckOutcome outcome;
    outcome.max_rel_err = max_fd_error({logits}, forward, epsilon);
    return outcome;
}

}  // namespace

GradCheckOutcome grad_check_fragment(FragmentKind kind, WeightMode mode, std::uint64_t seed,
                                     double margin, double epsilon) {
    switch (kind) {
        case FragmentKind::FernLayer: return check_fern(mode, seed, margin, epsilon);
        case FragmentKind::ConvLayer: return check_conv(seed, epsilon);
        case FragmentKind::BatchNormLayer: return check_batchnorm(seed, epsilon);
        case FragmentKind::SoftmaxLoss: return check_loss(seed, epsilon);
    }
    throw ContractError("grad_check_fragment: unknown fragment kind");
}

}  // namespace fernnet
