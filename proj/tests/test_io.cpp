#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fernnet/dataset.hpp"
#include "fernnet/serialize.hpp"

using namespace fernnet;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    const auto dir = fs::temp_directory_path() / "fernnet_test_io";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("kv parser handles sections, comments and whitespace") {
    const auto kv = KvFile::parse("# header comment\n"
                                  "\n"
                                  "[model]\n"
                                  "  backbone =  fern  \n"
                                  "depth= 3\n"
                                  "[train]\n"
                                  "lr = 0.001\n");
    const auto* model = kv.find("model");
    REQUIRE(model != nullptr);
    CHECK(model->get("backbone") == std::string("fern"));
    CHECK(model->get("depth") == std::string("3"));
    CHECK(kv.find("train")->get("lr") == std::string("0.001"));
    CHECK(kv.find("missing") == nullptr);

    CHECK_THROWS_AS(KvFile::parse("just words\n"), ConfigError);
    CHECK_THROWS_AS(KvFile::parse("[unclosed\n"), ConfigError);
    CHECK_THROWS_AS(KvFile::parse_file("/nonexistent/path.cfg"), IoError);
}

TEST_CASE("model config round-trips through its text form") {
    ModelConfig cfg = patch_classifier_config(Backbone::Fern);
    cfg.seed = 99;
    cfg.weight_mode = WeightMode::NormalizedProximity;
    cfg.thresholds_trainable = false;
    cfg.dtype = DType::F64;
    cfg.layers[2].backbone_override = Backbone::Conv;

    const std::string text = model_config_to_text(cfg);
    const ModelConfig back = model_config_from_kv(KvFile::parse(text));
    CHECK(back.backbone == cfg.backbone);
    CHECK(back.seed == cfg.seed);
    CHECK(back.dtype == cfg.dtype);
    CHECK(back.ferns == cfg.ferns);
    CHECK(back.depth == cfg.depth);
    CHECK(back.weight_mode == cfg.weight_mode);
    CHECK(back.thresholds_trainable == cfg.thresholds_trainable);
    REQUIRE(back.layers.size() == cfg.layers.size());
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        CHECK(back.layers[i].kind == cfg.layers[i].kind);
        CHECK(back.layers[i].c_in == cfg.layers[i].c_in);
        CHECK(back.layers[i].c_out == cfg.layers[i].c_out);
        CHECK(back.layers[i].k == cfg.layers[i].k);
        CHECK(back.layers[i].stride == cfg.layers[i].stride);
        CHECK(back.layers[i].padding == cfg.layers[i].padding);
        CHECK(back.layers[i].norm == cfg.layers[i].norm);
        CHECK(back.layers[i].backbone_override == cfg.layers[i].backbone_override);
    }

    CHECK_THROWS_AS(model_config_from_kv(KvFile::parse("[model]\nbackbone = fern\n")), ConfigError);
    CHECK_THROWS_AS(model_config_from_kv(KvFile::parse("[model]\nmystery = 1\nlayer1 = pool\n")),
                    ConfigError);
    CHECK_THROWS_AS(
        model_config_from_kv(KvFile::parse("[model]\nlayer1 = pool\nlayer3 = pool\n")),
        ConfigError);
}

TEST_CASE("checkpoints round-trip bit-identically") {
    ModelConfig cfg;
    cfg.backbone = Backbone::Fern;
    cfg.ferns = 4;
    cfg.depth = 3;
    cfg.seed = 11;
    cfg.layers = {LayerSpec::backbone(2, 6, 3, 2, 1, NormKind::BatchNorm), LayerSpec::pool(),
                  LayerSpec::backbone(6, 2, 1, 1, 0, NormKind::None)};
    auto model = build_model<float>(cfg);
    // Perturb the running stats so buffers are exercised too.
    model.stages[0].bn->running_mean = {1, 2, 3, 4, 5, 6};

    const auto path = (test_dir() / "model.fern").string();
    save_model(path, model);

    const Checkpoint ckpt = load_checkpoint(path);
    CHECK(ckpt.config_text == model_config_to_text(cfg));
    auto restored = load_model_as<float>(ckpt);
    const auto a = model_records(model);
    const auto b = model_records(restored);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(a[i].dtype == b[i].dtype);
        CHECK(a[i].extents == b[i].extents);
        CHECK(a[i].raw == b[i].raw);  // includes fern dims and offsets
    }

    // Saving the restored model reproduces the file byte for byte.
    const auto path2 = (test_dir() / "model2.fern").string();
    save_model(path2, restored);
    CHECK(read_file(path) == read_file(path2));
}

TEST_CASE("f64 checkpoints round-trip too") {
    ModelConfig cfg;
    cfg.backbone = Backbone::Conv;
    cfg.dtype = DType::F64;
    cfg.seed = 13;
    cfg.layers = {LayerSpec::backbone(1, 3, 3, 1, 1, NormKind::None)};
    auto model = build_model<double>(cfg);
    const auto path = (test_dir() / "model64.fern").string();
    save_model(path, model);
    auto restored = load_model_as<double>(load_checkpoint(path));
    CHECK(restored.stages[0].conv->weight->data == model.stages[0].conv->weight->data);
}

TEST_CASE("checkpoint loader rejects malformed files with typed errors") {
    const auto dir = test_dir();

    const auto bad_magic = (dir / "bad_magic.fern").string();
    write_file_atomic(bad_magic, "NOPE....");
    CHECK_THROWS_AS(load_checkpoint(bad_magic), IoError);

    ModelConfig cfg;
    cfg.backbone = Backbone::Conv;
    cfg.seed = 1;
    cfg.layers = {LayerSpec::backbone(1, 2, 1, 1, 0, NormKind::None)};
    auto model = build_model<float>(cfg);
    const auto good = (dir / "good.fern").string();
    save_model(good, model);

    std::string bytes = read_file(good);
    SUBCASE("version mismatch names the versions") {
        bytes[4] = 42;  // version field
        const auto versioned = (dir / "versioned.fern").string();
        write_file_atomic(versioned, bytes);
        CHECK_THROWS_WITH_AS(load_checkpoint(versioned),
                             doctest::Contains("format version 42"), IoError);
    }
    SUBCASE("truncation is caught") {
        const auto truncated = (dir / "truncated.fern").string();
        write_file_atomic(truncated, bytes.substr(0, bytes.size() / 2));
        CHECK_THROWS_AS(load_checkpoint(truncated), IoError);
    }
    SUBCASE("trailing garbage is caught") {
        const auto padded = (dir / "padded.fern").string();
        write_file_atomic(padded, bytes + "x");
        CHECK_THROWS_AS(load_checkpoint(padded), IoError);
    }
}

TEST_CASE("dataset files round-trip") {
    Dataset ds;
    ds.n = 3;
    ds.c = 2;
    ds.h = ds.w = 2;
    ds.labels = {0, 1, 0};
    Rng rng(7);
    for (std::size_t i = 0; i < 3 * ds.sample_size(); ++i)
        ds.data.push_back(static_cast<float>(rng.normal()));

    const auto path = (test_dir() / "tiny.fds").string();
    save_dataset(path, ds);
    const Dataset back = load_dataset(path);
    CHECK(back.n == ds.n);
    CHECK(back.c == ds.c);
    CHECK(back.h == ds.h);
    CHECK(back.w == ds.w);
    CHECK(back.labels == ds.labels);
    CHECK(back.data == ds.data);

    CHECK(!fs::exists(path + ".tmp"));  // atomic write cleaned up

    SUBCASE("bad magic") {
        const auto bad = (test_dir() / "bad.fds").string();
        write_file_atomic(bad, "JUNKJUNKJUNKJUNKJUNKJUNK");
        CHECK_THROWS_AS(load_dataset(bad), IoError);
    }
    SUBCASE("non-binary label") {
        std::string bytes = read_file(path);
        bytes[20] = 7;  // first label byte
        const auto bad = (test_dir() / "badlabel.fds").string();
        write_file_atomic(bad, bytes);
        CHECK_THROWS_AS(load_dataset(bad), DataError);
    }
    SUBCASE("size mismatch") {
        std::string bytes = read_file(path);
        const auto bad = (test_dir() / "short.fds").string();
        write_file_atomic(bad, bytes.substr(0, bytes.size() - 4));
        CHECK_THROWS_AS(load_dataset(bad), IoError);
    }
}

TEST_CASE("synthetic dataset is deterministic and balanced") {
    const auto a = synth_dataset(64, 5);
    const auto b = synth_dataset(64, 5);
    CHECK(a.data == b.data);
    CHECK(a.labels == b.labels);

    const auto c = synth_dataset(65, 6);
    std::size_t ones = 0;
    for (auto l : c.labels) ones += l;
    CHECK(std::abs(static_cast<long>(ones) - static_cast<long>(65 - ones)) <= 1);

    CHECK_THROWS_AS(synth_dataset(1, 1), ConfigError);
}

TEST_CASE("a 3-nearest-neighbor classifier beats 70% on the synthetic task") {
    const auto train = synth_dataset(256, 21);
    const auto test = synth_dataset(128, 22);
    const std::size_t S = train.sample_size();
    std::size_t correct = 0;
    for (std::size_t t = 0; t < test.n; ++t) {
        std::array<std::pair<double, int>, 3> best;
        best.fill({1e300, 0});
        for (std::size_t i = 0; i < train.n; ++i) {
            double d = 0;
            const float* x = test.data.data() + t * S;
            const float* y = train.data.data() + i * S;
            for (std::size_t j = 0; j < S; ++j) {
                const double diff = static_cast<double>(x[j]) - static_cast<double>(y[j]);
                d += diff * diff;
            }
            if (d < best[2].first) {
                best[2] = {d, train.labels[i]};
                std::sort(best.begin(), best.end());
            }
        }
        const int votes = best[0].second + best[1].second + best[2].second;
        const int pred = votes >= 2 ? 1 : 0;
        if (pred == test.labels[t]) ++correct;
    }
    const double acc = static_cast<double>(correct) / test.n;
    // Regression floor: the task must stay learnable from raw pixels.
    CHECK(acc > 0.70);
}

TEST_CASE("IDX loader filters and standardizes") {
    const auto dir = test_dir();
    const auto images = (dir / "digits.idx3").string();
    const auto labels = (dir / "digits.idx1").string();

    // 4 images of 2x2 pixels, labels 0, 1, 3, 1.
    std::string img;
    auto be32 = [&img](std::uint32_t v) {
        for (int i = 3; i >= 0; --i) img.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    be32(0x803);
    be32(4);
    be32(2);
    be32(2);
    for (int i = 0; i < 16; ++i) img.push_back(static_cast<char>(i * 16));
    write_file_atomic(images, img);

    std::string lab;
    for (int i = 3; i >= 0; --i) lab.push_back(static_cast<char>((0x801u >> (8 * i)) & 0xff));
    for (int i = 3; i >= 0; --i) lab.push_back(static_cast<char>((4u >> (8 * i)) & 0xff));
    lab += std::string("\x00\x01\x03\x01", 4);
    write_file_atomic(labels, lab);

    const Dataset ds = load_idx(images, labels, 0, 1);
    CHECK(ds.n == 3);
    CHECK(ds.c == 1);
    CHECK(ds.h == 2);
    CHECK(ds.w == 2);
    CHECK(ds.labels == std::vector<std::uint8_t>{0, 1, 1});
    double mean = 0;
    for (float v : ds.data) mean += v;
    CHECK(std::abs(mean / ds.data.size()) < 1e-5);

    CHECK_THROWS_AS(load_idx(labels, labels, 0, 1), IoError);  // wrong magic
    CHECK_THROWS_AS(load_idx(images, labels, 8, 9), DataError);  // nothing kept
}
