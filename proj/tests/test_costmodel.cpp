#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fernnet/costmodel.hpp"
#include "fernnet/serialize.hpp"

using namespace fernnet;

TEST_CASE("parameter counts for the patch classifier") {
    auto fern = patch_classifier_config(Backbone::Fern);
    CHECK(count_params(fern) == 37920);

    auto frozen = fern;
    frozen.thresholds_trainable = false;
    CHECK(count_params(frozen) == 37632);
    CHECK(count_params(frozen, /*include_frozen=*/true) == 37920);

    auto conv = patch_classifier_config(Backbone::Conv);
    CHECK(count_params(conv) == 79234);

    auto binconv = patch_classifier_config(Backbone::BinConv);
    CHECK(count_params(binconv) == count_params(conv));

    ModelConfig empty;
    empty.layers = {LayerSpec::pool()};
    CHECK(count_params(empty) == 0);
}

TEST_CASE("count_params agrees with a brute-force traversal of the built model") {
    for (Backbone bb : {Backbone::Fern, Backbone::Conv, Backbone::BinConv}) {
        for (bool trainable : {true, false}) {
            auto cfg = patch_classifier_config(bb);
            cfg.thresholds_trainable = trainable;
            auto model = build_model<float>(cfg);
            std::size_t brute = 0;
            for (auto& p : model.parameters()) brute += p.tensor->numel();
            CHECK(brute == count_params(cfg));
        }
    }
}

TEST_CASE("a 1x1 single-output conv costs exactly one multiplication") {
    ModelConfig cfg;
    cfg.backbone = Backbone::Conv;
    cfg.layers = {LayerSpec::backbone(1, 1, 1, 1, 0, NormKind::None)};
    const auto report = count_ops(cfg, {1, 1, 1});
    CHECK(report.total.float_mul == 1);
}

TEST_CASE("fern op counts for the 64-channel 3x3 stride-2 geometry") {
    ModelConfig cfg;
    cfg.backbone = Backbone::Fern;
    cfg.ferns = 24;
    cfg.depth = 3;
    cfg.layers = {LayerSpec::backbone(64, 64, 3, 2, 1, NormKind::None)};
    const auto report = count_ops(cfg, {64, 16, 16});
    REQUIRE(report.layers.size() == 1);
    const auto& l = report.layers[0];
    CHECK(l.out_elements == 64 * 64);  // 8x8 positions, 64 channels

    // Per output element: K*(m + c_out)/c_out = 24*67/64.
    const double per_el = static_cast<double>(l.backbone_float_mul) /
                          static_cast<double>(l.out_elements);
    CHECK(per_el == doctest::Approx(25.125));
    const double conv_per_el = static_cast<double>(l.matched_conv_float_mul) /
                               static_cast<double>(l.out_elements);
    CHECK(conv_per_el == doctest::Approx(576));
    CHECK(per_el / conv_per_el == doctest::Approx(0.0436).epsilon(0.01));

    REQUIRE(l.fern_phases.has_value());
    CHECK(l.fern_phases->indexing.float_mul == 0);
    CHECK(l.fern_phases->indexing.float_add == 0);
    CHECK(l.fern_phases->indexing.float_div == 0);
    CHECK(l.fern_phases->indexing.special_fn == 0);
    CHECK(l.fern_phases->indexing.compare == 64 * 24 * 3);
    CHECK(l.fern_phases->indexing.int_add_shift == 64 * 24 * 3);
}

TEST_CASE("op counts are additive across layers") {
    const auto cfg = patch_classifier_config(Backbone::Fern);
    const auto report = count_ops(cfg, {3, 64, 64});
    OpCounts sum;
    for (const auto& l : report.layers) sum += l.counts;
    CHECK(sum.float_mul == report.total.float_mul);
    CHECK(sum.float_add == report.total.float_add);
    CHECK(sum.special_fn == report.total.special_fn);
    CHECK(sum.compare == report.total.compare);
    CHECK(sum.int_add_shift == report.total.int_add_shift);
    CHECK(sum.mem_read_words == report.total.mem_read_words);
    CHECK(sum.mem_write_words == report.total.mem_write_words);
}

TEST_CASE("estimate_energy") {
    SUBCASE("all-zero counts cost nothing") {
        CHECK(estimate_energy(OpCounts{}, EnergyTable::defaults()) == 0.0);
    }
    SUBCASE("a single multiplication is priced from the table") {
        OpCounts c;
        c.float_mul = 1;
        EnergyTable t;
        t.float_mul = 3.7e-12;
        CHECK(estimate_energy(c, t) == doctest::Approx(3.7e-12));
    }
    SUBCASE("a nonzero tally with no table entry is an error") {
        OpCounts c;
        c.float_mul = 5;
        EnergyTable t;
        t.float_add = 1e-12;
        CHECK_THROWS_AS(estimate_energy(c, t), ConfigError);
    }
}

TEST_CASE("energy ordering of the three backbones under the default table") {
    const auto table = EnergyTable::defaults();
    const double fern =
        estimate_energy(count_ops(patch_classifier_config(Backbone::Fern), {3, 64, 64}).total, table);
    const double binconv = estimate_energy(
        count_ops(patch_classifier_config(Backbone::BinConv), {3, 64, 64}).total, table);
    const double conv =
        estimate_energy(count_ops(patch_classifier_config(Backbone::Conv), {3, 64, 64}).total, table);
    CHECK(fern < binconv);
    CHECK(binconv < conv);
}

TEST_CASE("the shipped energy table matches the built-in defaults") {
    const auto shipped = load_energy_table(std::string(FERNNET_SOURCE_DIR) +
                                           "/configs/energy_default.cfg");
    const auto builtin = EnergyTable::defaults();
    CHECK(shipped.float_mul == builtin.float_mul);
    CHECK(shipped.float_add == builtin.float_add);
    CHECK(shipped.float_div == builtin.float_div);
    CHECK(shipped.special_fn == builtin.special_fn);
    CHECK(shipped.compare == builtin.compare);
    CHECK(shipped.int_add_shift == builtin.int_add_shift);
    CHECK(shipped.mem_read_words == builtin.mem_read_words);
    CHECK(shipped.mem_write_words == builtin.mem_write_words);
}

TEST_CASE("energy table loader rejects unknown keys and bad values") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "fernnet_test_energy";
    fs::create_directories(dir);
    const auto path = (dir / "bad.cfg").string();
    {
        std::ofstream out(path);
        out << "float_mul = not_a_number\n";
    }
    CHECK_THROWS_AS(load_energy_table(path), ConfigError);
    {
        std::ofstream out(path);
        out << "warp_drive = 1e-12\n";
    }
    CHECK_THROWS_AS(load_energy_table(path), ConfigError);
}

TEST_CASE("report text carries parameter counts and the mul-free indexing line") {
    const auto cfg = patch_classifier_config(Backbone::Fern);
    const auto report = count_ops(cfg, {3, 64, 64});
    const auto text = op_report_text(cfg, report, EnergyTable::defaults(), "builtin-default", false);
    CHECK(text.find("37920") != std::string::npos);
    CHECK(text.find("37632") != std::string::npos);
    CHECK(text.find("indexing float_mul = 0") != std::string::npos);

    const auto kv = op_report_text(cfg, report, EnergyTable::defaults(), "builtin-default", true);
    CHECK(kv.find("params.trainable = 37920") != std::string::npos);
    CHECK(kv.find("layer1.indexing.float_mul = 0") != std::string::npos);
}
