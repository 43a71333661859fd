#include "doctest.h"
#include "fernnet/costmodel.hpp"
#include "fernnet/serialize.hpp"
#include "fernnet/train.hpp"

using namespace fernnet;

namespace {

// Tiny 2-stage net on 8x8 inputs for fast training tests.
ModelConfig tiny_config(Backbone backbone) {
    ModelConfig cfg;
    cfg.backbone = backbone;
    cfg.ferns = 8;
    cfg.depth = 3;
    cfg.weight_mode = WeightMode::NormalizedProximity;
    cfg.layers = {
        LayerSpec::backbone(3, 8, 3, 2, 1, NormKind::BatchNorm),
        LayerSpec::pool(),
        LayerSpec::backbone(8, 2, 1, 1, 0, NormKind::None),
    };
    cfg.seed = 5;
    return cfg;
}

Dataset tiny_dataset(std::size_t n, bool separable, std::uint64_t seed) {
    Dataset ds;
    ds.n = static_cast<std::uint32_t>(n);
    ds.c = 3;
    ds.h = ds.w = 8;
    ds.labels.resize(n);
    ds.data.resize(n * ds.sample_size());
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = static_cast<std::uint8_t>(i % 2);
        const float base = separable ? (ds.labels[i] ? 1.0f : -1.0f) : 0.0f;
        for (std::size_t j = 0; j < ds.sample_size(); ++j)
            ds.data[i * ds.sample_size() + j] = base + 0.3f * static_cast<float>(rng.normal());
    }
    return ds;
}

}  // namespace

TEST_CASE("the 5-stage patch classifier emits (N,2) logits for every backbone") {
    Rng rng(3);
    auto input = randn<float>({2, 3, 64, 64}, rng);
    for (Backbone bb : {Backbone::Fern, Backbone::Conv, Backbone::BinConv}) {
        auto model = build_model<float>(patch_classifier_config(bb));
        Tape<float> tape(false);
        auto logits = model.forward(tape, input, /*train=*/true);
        CHECK(logits->shape == Shape{2, 2});
    }
}

TEST_CASE("channel chaining violations are rejected") {
    ModelConfig cfg = patch_classifier_config(Backbone::Conv);
    cfg.layers[1].c_in = 32;  // previous stage emits 64
    CHECK_THROWS_AS(build_model<float>(cfg), ConfigError);
}

TEST_CASE("softmax cross entropy values and gradient") {
    Tape<double> tape(false);

    auto uniform = make_tensor<double>({1, 2}, {0, 0});
    CHECK(softmax_cross_entropy(tape, uniform, {0})->data[0] ==
          doctest::Approx(0.69315).epsilon(1e-4));

    auto confident = make_tensor<double>({1, 2}, {100, 0});
    CHECK(softmax_cross_entropy(tape, confident, {0})->data[0] == doctest::Approx(0.0).epsilon(1e-6));

    CHECK_THROWS_AS(softmax_cross_entropy(tape, uniform, {2}), DataError);
    CHECK_THROWS_AS(softmax_cross_entropy(tape, uniform, {-1}), DataError);

    // Analytic backward is (softmax - onehot)/N.
    Rng rng(19);
    auto logits = randn<double>({4, 2}, rng);
    logits->requires_grad = true;
    logits->ensure_grad();
    std::vector<int> labels = {0, 1, 1, 0};
    Tape<double> g;
    g.backward(softmax_cross_entropy(g, logits, labels));
    for (std::size_t i = 0; i < 4; ++i) {
        const double a = logits->data[i * 2], b = logits->data[i * 2 + 1];
        const double mx = std::max(a, b);
        const double za = std::exp(a - mx), zb = std::exp(b - mx);
        const double pa = za / (za + zb);
        const double expect0 = (pa - (labels[i] == 0 ? 1 : 0)) / 4;
        CHECK(logits->grad[i * 2] == doctest::Approx(expect0).epsilon(1e-10));
    }

    for (std::uint64_t t = 0; t < 3; ++t) {
        const auto r =
            grad_check_fragment(FragmentKind::SoftmaxLoss, WeightMode::LiteralL2, 600 + t, 0, 1e-6);
        CHECK(r.max_rel_err < 1e-6);
    }
}

TEST_CASE("optimizer steps") {
    TrainConfig cfg;
    cfg.optimizer = OptimKind::SGD;
    cfg.lr = 0.1;
    cfg.momentum = 0;

    SUBCASE("plain SGD step") {
        auto p = make_param<double>({1}, {1.0});
        p->grad[0] = 1.0;
        Optimizer<double> opt({p}, cfg);
        opt.step();
        CHECK(p->data[0] == doctest::Approx(0.9));
    }

    SUBCASE("zero gradient leaves parameters untouched") {
        auto p = make_param<double>({3}, {1, 2, 3});
        Optimizer<double> opt({p}, cfg);
        opt.step();
        CHECK(p->data == std::vector<double>{1, 2, 3});
    }

    SUBCASE("first Adam step moves by about lr regardless of gradient scale") {
        for (double scale : {1e-3, 1.0, 1e3}) {
            TrainConfig adam;
            adam.optimizer = OptimKind::Adam;
            adam.lr = 1e-3;
            auto p = make_param<double>({1}, {0.0});
            p->grad[0] = scale;
            Optimizer<double> opt({p}, adam);
            opt.step();
            CHECK(std::abs(p->data[0]) == doctest::Approx(adam.lr).epsilon(1e-3));
        }
    }
}

TEST_CASE("the fd harness detects a corrupted backward rule") {
    Rng rng(51);
    auto x = randn<double>({4}, rng);
    x->requires_grad = true;
    x->ensure_grad();
    Tape<double> tape;
    tape.backward(reduce(tape, tanh_op(tape, x), ReduceKind::Sum));
    for (auto& g : x->grad) g *= 2.0;  // deliberately wrong by 2x
    auto forward = [&]() {
        Tape<double> fwd(false);
        return reduce(fwd, tanh_op(fwd, x), ReduceKind::Sum)->data[0];
    };
    CHECK(max_fd_error({x}, forward, 1e-6) > 0.3);
}

TEST_CASE("a constant-logit model scores the base rate") {
    // Pool then 1x1 head; zero weights and bias (1, 0) make the logits a
    // constant (1, 0), so argmax always picks class 0.
    ModelConfig cfg;
    cfg.backbone = Backbone::Conv;
    cfg.layers = {LayerSpec::pool(), LayerSpec::backbone(3, 2, 1, 1, 0, NormKind::None)};
    auto model = build_model<float>(cfg);
    for (auto& v : model.stages[1].conv->weight->data) v = 0.0f;
    model.stages[1].conv->bias->data = {1.0f, 0.0f};
    auto ds = tiny_dataset(10, false, 1);
    ds.labels = {0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
    CHECK(evaluate(model, ds) == doctest::Approx(0.3));
}

TEST_CASE("one epoch on a separable toy reduces the loss") {
    auto ds = tiny_dataset(4, true, 2);
    auto model = build_model<float>(tiny_config(Backbone::Conv));
    TrainConfig tc;
    tc.optimizer = OptimKind::SGD;
    tc.lr = 0.02;
    tc.momentum = 0;
    tc.batch_size = 4;  // full batch: plain gradient descent
    tc.epochs = 2;
    tc.seed = 3;
    const auto history = train_epochs(model, ds, ds, tc);
    REQUIRE(history.size() == 2);
    CHECK(history[1].train_loss < history[0].train_loss);
}

TEST_CASE("training is deterministic given the seeds") {
    auto run = []() {
        auto ds = tiny_dataset(16, true, 4);
        auto model = build_model<float>(tiny_config(Backbone::Fern));
        TrainConfig tc;
        tc.lr = 1e-2;
        tc.batch_size = 4;
        tc.epochs = 2;
        tc.seed = 9;
        auto history = train_epochs(model, ds, ds, tc);
        return std::make_pair(history, model_records(model));
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.first.size() == b.first.size());
    for (std::size_t i = 0; i < a.first.size(); ++i) {
        CHECK(a.first[i].train_loss == b.first[i].train_loss);
        CHECK(a.first[i].test_acc == b.first[i].test_acc);
    }
    REQUIRE(a.second.size() == b.second.size());
    for (std::size_t i = 0; i < a.second.size(); ++i) CHECK(a.second[i].raw == b.second[i].raw);
}

TEST_CASE("constant-label loss converges for every backbone") {
    for (Backbone bb : {Backbone::Fern, Backbone::Conv, Backbone::BinConv}) {
        CAPTURE(backbone_name(bb));
        auto ds = tiny_dataset(16, false, 6);
        std::fill(ds.labels.begin(), ds.labels.end(), std::uint8_t{0});
        auto model = build_model<float>(tiny_config(bb));
        TrainConfig tc;
        tc.lr = 1e-2;
        tc.batch_size = 8;
        tc.epochs = 15;
        tc.seed = 7;
        const auto history = train_epochs(model, ds, ds, tc);
        CHECK(history.back().train_loss < 0.1);  // from ln 2 at init
    }
}

TEST_CASE("train_epochs rejects an empty dataset") {
    Dataset empty;
    auto model = build_model<float>(tiny_config(Backbone::Conv));
    TrainConfig tc;
    CHECK_THROWS_AS(train_epochs(model, empty, empty, tc), DataError);
}

TEST_CASE("a non-finite loss aborts with a diagnostic") {
    auto ds = tiny_dataset(8, true, 8);
    auto model = build_model<float>(tiny_config(Backbone::Conv));
    // Poison the classifier head; earlier layers feed through a ReLU, which
    // maps NaN to 0.
    model.stages[2].conv->weight->data[0] = std::numeric_limits<float>::quiet_NaN();
    TrainConfig tc;
    tc.epochs = 1;
    CHECK_THROWS_AS(train_epochs(model, ds, ds, tc), NumericError);
}

TEST_CASE("literal L2 weighting zeroes the output at full saturation") {
    FernConfig fc;
    fc.ferns = 3;
    fc.depth = 3;
    fc.in_dim = 6;
    fc.c_out = 4;
    fc.weight_mode = WeightMode::LiteralL2;
    fc.seed = 2;
    auto layer = fern_init<double>(fc);
    auto rows = make_tensor<double>({2, 6});
    for (auto& v : rows->data) v = 500.0;  // |c| = 1 exactly in f64
    Tape<double> tape(false);
    auto out = fern_forward(tape, rows, layer);
    for (double v : out->data) CHECK(v == 0.0);
}
