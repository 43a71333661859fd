#include <algorithm>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "fernnet/costmodel.hpp"
#include "fernnet/serialize.hpp"
#include "fernnet/train.hpp"

namespace {

using namespace fernnet;

constexpr int kExitOk = 0;
constexpr int kExitVerification = 1;
constexpr int kExitUsage = 2;

struct DataFlags {
    std::string data_path;
    std::string idx_images, idx_labels;
    std::string classes = "0,1";
};

void add_data_flags(CLI::App* cmd, DataFlags& f, bool require) {
    auto* data = cmd->add_option("--data", f.data_path, "dataset file (FDS1 format)");
    cmd->add_option("--idx-images", f.idx_images, "IDX image file (alternative to --data)");
    cmd->add_option("--idx-labels", f.idx_labels, "IDX label file (used with --idx-images)");
    cmd->add_option("--classes", f.classes, "two IDX classes to keep, e.g. 0,1");
    if (require) data->check([](const std::string&) { return std::string(); });
}

Dataset load_data(const DataFlags& f, const char* what) {
    if (!f.idx_images.empty() || !f.idx_labels.empty()) {
        if (f.idx_images.empty() || f.idx_labels.empty()) {
            throw ConfigError("--idx-images and --idx-labels must be given together");
        }
        const auto comma = f.classes.find(',');
        if (comma == std::string::npos) throw ConfigError("--classes expects 'a,b'");
        return load_idx(f.idx_images, f.idx_labels, std::stoi(f.classes.substr(0, comma)),
                        std::stoi(f.classes.substr(comma + 1)));
    }
    if (f.data_path.empty()) {
        throw ConfigError(std::string("no ") + what + " dataset given (use --data or --idx-images)");
    }
    return load_dataset(f.data_path);
}

struct ModelOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> dtype;
    std::optional<std::string> backbone;
    std::optional<std::string> weight_mode;
};

void apply_overrides(ModelConfig& cfg, const ModelOverrides& o) {
    if (o.seed) cfg.seed = *o.seed;
    if (o.dtype) cfg.dtype = *o.dtype == "f64" ? DType::F64 : DType::F32;
    if (o.backbone) cfg.backbone = backbone_from_name(*o.backbone);
    if (o.weight_mode) cfg.weight_mode = weight_mode_from_name(*o.weight_mode);
}

template <typename T>
int run_train(const ModelConfig& mcfg, const TrainConfig& tcfg, const Dataset& train,
              const Dataset& test, const std::string& out_path) {
    auto model = build_model<T>(mcfg);
    train_epochs<T>(model, train, test, tcfg, [](const EpochStats& s) {
        std::cout << "epoch=" << s.epoch << " train_loss=" << std::setprecision(6) << s.train_loss
                  << " test_acc=" << std::setprecision(4) << s.test_acc
                  << " wall_seconds=" << std::setprecision(3) << s.wall_seconds << '\n'
                  << std::flush;
        return true;
    });
    save_model(out_path, model);
    std::cout << "checkpoint written to " << out_path << '\n';
    return kExitOk;
}

template <typename T>
int run_eval(const Checkpoint& ckpt, const Dataset& data) {
    auto model = load_model_as<T>(ckpt);
    const double acc = evaluate(model, data);
    std::cout << "accuracy=" << std::setprecision(4) << acc << " samples=" << data.n << '\n';
    return kExitOk;
}

int cmd_train(const std::string& config_path, const DataFlags& train_flags,
              const std::string& test_path, const std::string& out_path, const ModelOverrides& ov,
              std::optional<std::uint64_t> epochs) {
    const KvFile kv = KvFile::parse_file(config_path);
    ModelConfig mcfg = model_config_from_kv(kv);
    TrainConfig tcfg = train_config_from_kv(kv);
    apply_overrides(mcfg, ov);
    if (ov.seed) tcfg.seed = *ov.seed;
    if (epochs) tcfg.epochs = *epochs;
    const Dataset train = load_data(train_flags, "training");
    const Dataset test = test_path.empty() ? train : load_dataset(test_path);
    if (mcfg.dtype == DType::F64) return run_train<double>(mcfg, tcfg, train, test, out_path);
    return run_train<float>(mcfg, tcfg, train, test, out_path);
}

int cmd_eval(const std::string& ckpt_path, const DataFlags& flags) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const auto cfg = model_config_from_kv(KvFile::parse(ckpt.config_text, "<checkpoint>"));
    const Dataset data = load_data(flags, "evaluation");
    if (cfg.dtype == DType::F64) return run_eval<double>(ckpt, data);
    return run_eval<float>(ckpt, data);
}

int cmd_report(const std::vector<std::string>& config_paths, const std::string& ckpt_path,
               std::size_t input_size, const std::string& energy_path, bool machine,
               const ModelOverrides& ov) {
    std::vector<ModelConfig> configs;
    for (const auto& p : config_paths) {
        auto cfg = model_config_from_kv(KvFile::parse_file(p));
        apply_overrides(cfg, ov);
        configs.push_back(cfg);
    }
    if (!ckpt_path.empty()) {
        const Checkpoint ckpt = load_checkpoint(ckpt_path);
        configs.push_back(model_config_from_kv(KvFile::parse(ckpt.config_text, "<checkpoint>")));
    }
    if (configs.empty()) throw ConfigError("report: give at least one --config or --checkpoint");
    const EnergyTable table = energy_path.empty() ? EnergyTable::defaults()
                                                  : load_energy_table(energy_path);
    const std::string table_name = energy_path.empty() ? "builtin-default" : energy_path;
    std::vector<std::pair<std::string, double>> energies;
    for (const auto& cfg : configs) {
        const std::size_t c_in =
            cfg.layers.front().kind == LayerSpec::Kind::Backbone ? cfg.layers.front().c_in : 3;
        const auto report = count_ops(cfg, {c_in, input_size, input_size});
        std::cout << op_report_text(cfg, report, table, table_name, machine);
        std::cout << '\n';
        energies.emplace_back(backbone_name(cfg.backbone), estimate_energy(report.total, table));
    }
    if (energies.size() > 1) {
        std::sort(energies.begin(), energies.end(),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        std::cout << "energy ordering: ";
        for (std::size_t i = 0; i < energies.size(); ++i) {
            if (i) std::cout << " < ";
            std::cout << energies[i].first << " (" << std::scientific << std::setprecision(3)
                      << energies[i].second << " J)" << std::defaultfloat;
        }
        std::cout << '\n';
    }
    return kExitOk;
}

int cmd_gradcheck(std::size_t trials, double margin, double epsilon, std::uint64_t seed) {
    if (trials == 0) throw ConfigError("gradcheck: --trials must be >= 1");
    struct Row {
        std::string name;
        FragmentKind kind;
        WeightMode mode;
        double threshold;
    };
    const std::vector<Row> rows = {
        {"fern[literal_l2]", FragmentKind::FernLayer, WeightMode::LiteralL2, 1e-5},
        {"fern[normalized_proximity]", FragmentKind::FernLayer, WeightMode::NormalizedProximity, 1e-5},
        {"fern[mean_l1]", FragmentKind::FernLayer, WeightMode::MeanL1Proximity, 1e-5},
        {"conv", FragmentKind::ConvLayer, WeightMode::LiteralL2, 1e-6},
        {"batchnorm", FragmentKind::BatchNormLayer, WeightMode::LiteralL2, 1e-6},
        {"softmax_ce", FragmentKind::SoftmaxLoss, WeightMode::LiteralL2, 1e-6},
    };
    bool all_ok = true;
    for (const auto& row : rows) {
        double worst = 0;
        std::size_t resamples = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            const auto r = grad_check_fragment(row.kind, row.mode, seed + t, margin, epsilon);
            worst = std::max(worst, r.max_rel_err);
            resamples += r.resamples;
        }
        const bool ok = worst < row.threshold;
        all_ok = all_ok && ok;
        std::cout << std::left << std::setw(28) << row.name << " max_rel_err=" << std::scientific
                  << std::setprecision(3) << worst << std::defaultfloat
                  << " threshold=" << row.threshold << " resamples=" << resamples << "  "
                  << (ok ? "PASS" : "FAIL") << '\n';
    }
    return all_ok ? kExitOk : kExitVerification;
}

int cmd_synth(const std::string& train_out, const std::string& test_out, std::size_t n_train,
              std::size_t n_test, std::uint64_t seed) {
    if (n_train < 2 || n_test < 2) throw ConfigError("synth: need at least 2 samples per split");
    // Disjoint streams per split so the test set is independent of the
    // training set size.
    save_dataset(train_out, synth_dataset(n_train, seed));
    save_dataset(test_out, synth_dataset(n_test, seed + 0x9e3779b97f4a7c15ull));
    std::cout << "wrote " << n_train << " train samples to " << train_out << '\n';
    std::cout << "wrote " << n_test << " test samples to " << test_out << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"end-to-end trainable random-fern layers as convolution replacements"};
    app.require_subcommand(1);

    ModelOverrides ov;
    std::string config_path, test_path, out_path, ckpt_path, energy_path;
    std::string train_out, test_out;
    DataFlags data_flags;
    std::vector<std::string> config_paths;
    std::optional<std::uint64_t> epochs_override;
    std::size_t trials = 100, n_train = 4096, n_test = 1024, input_size = 64;
    double margin = 1e-3, epsilon = 1e-6;
    std::uint64_t seed = 1;
    bool machine = false;

    auto add_overrides = [&](CLI::App* cmd) {
        cmd->add_option("--seed", ov.seed, "override model and training seeds");
        cmd->add_option("--dtype", ov.dtype, "f32 or f64")
            ->check(CLI::IsMember({"f32", "f64"}));
        cmd->add_option("--backbone", ov.backbone, "fern, conv or binconv")
            ->check(CLI::IsMember({"fern", "conv", "binconv"}));
        cmd->add_option("--weight-mode", ov.weight_mode, "instance weight formula")
            ->check(CLI::IsMember({"literal_l2", "normalized_proximity", "mean_l1"}));
    };

    auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
    train->add_option("--config", config_path, "model/train config file")->required();
    add_data_flags(train, data_flags, false);
    train->add_option("--test", test_path, "held-out dataset for per-epoch accuracy");
    train->add_option("--out", out_path, "checkpoint output path")->required();
    train->add_option("--epochs", epochs_override, "override configured epoch count");
    add_overrides(train);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    add_data_flags(eval, data_flags, false);

    auto* report = app.add_subcommand("report", "parameter counts, op counts and energy estimate");
    report->add_option("--config", config_paths, "model config file (repeatable)");
    report->add_option("--checkpoint", ckpt_path, "read the config embedded in a checkpoint");
    report->add_option("--input-size", input_size, "input H=W for op counting (default 64)");
    report->add_option("--energy-table", energy_path, "per-op energy table file");
    report->add_flag("--machine", machine, "key = value output");
    add_overrides(report);

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks per layer kind");
    gradcheck->add_option("--trials", trials, "random fragments per layer kind (default 100)");
    gradcheck->add_option("--margin", margin, "minimum |tanh response| distance from 0");
    gradcheck->add_option("--epsilon", epsilon, "finite-difference step");
    gradcheck->add_option("--seed", seed, "base seed");

    auto* synth = app.add_subcommand("synth", "generate the synthetic two-class texture datasets");
    synth->add_option("--train-out", train_out, "training split path")->required();
    synth->add_option("--test-out", test_out, "test split path")->required();
    synth->add_option("--n-train", n_train, "training samples (default 4096)");
    synth->add_option("--n-test", n_test, "test samples (default 1024)");
    synth->add_option("--seed", seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (train->parsed())
            return cmd_train(config_path, data_flags, test_path, out_path, ov, epochs_override);
        if (eval->parsed()) return cmd_eval(ckpt_path, data_flags);
        if (report->parsed())
            return cmd_report(config_paths, ckpt_path, input_size, energy_path, machine, ov);
        if (gradcheck->parsed()) return cmd_gradcheck(trials, margin, epsilon, seed);
        if (synth->parsed()) return cmd_synth(train_out, test_out, n_train, n_test, seed);
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitVerification;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
