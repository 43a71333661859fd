// End-to-end checks of the command line tool. The binary path comes from the
// FERNNET_CLI environment variable (set by ctest).

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fernnet/dataset.hpp"
#include "fernnet/serialize.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* p = std::getenv("FERNNET_CLI");
    REQUIRE_MESSAGE(p != nullptr, "FERNNET_CLI must point at the CLI binary");
    return p;
}

fs::path work_dir() {
    const auto dir = fs::temp_directory_path() / "fernnet_test_cli";
    fs::create_directories(dir);
    return dir;
}

struct RunResult {
    int exit_code = -1;
    std::string out, err;
};

RunResult run(const std::string& args) {
    const auto dir = work_dir();
    const auto out_path = dir / "stdout.txt";
    const auto err_path = dir / "stderr.txt";
    const std::string cmd =
        '"' + cli() + "\" " + args + " > " + out_path.string() + " 2> " + err_path.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = fernnet::read_file(out_path.string());
    r.err = fernnet::read_file(err_path.string());
    return r;
}

std::string tiny_config_path() {
    const auto path = work_dir() / "tiny.cfg";
    std::ofstream f(path);
    f << "[model]\n"
         "backbone = fern\n"
         "seed = 3\n"
         "ferns = 6\n"
         "depth = 3\n"
         "weight_mode = normalized_proximity\n"
         "layer1 = 3,8,5,4,2,bn\n"
         "layer2 = pool\n"
         "layer3 = 8,2,1,1,0,none\n"
         "[train]\n"
         "optimizer = adam\n"
         "lr = 0.003\n"
         "batch_size = 16\n"
         "epochs = 2\n"
         "seed = 5\n";
    return path.string();
}

std::size_t count_lines_with(const std::string& text, const std::string& needle) {
    std::size_t n = 0, pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

std::string src_dir() { return FERNNET_SOURCE_DIR; }

}  // namespace

TEST_CASE("synth writes deterministic, loadable datasets") {
    const auto dir = work_dir();
    const auto a = (dir / "a.fds").string();
    const auto b = (dir / "b.fds").string();
    auto r = run("synth --train-out " + a + " --test-out " + b + " --n-train 8 --n-test 4 --seed 9");
    CHECK(r.exit_code == 0);
    const auto ds = fernnet::load_dataset(a);
    CHECK(ds.n == 8);
    CHECK(ds.c == 3);

    const auto a2 = (dir / "a2.fds").string();
    const auto b2 = (dir / "b2.fds").string();
    run("synth --train-out " + a2 + " --test-out " + b2 + " --n-train 8 --n-test 4 --seed 9");
    CHECK(fernnet::read_file(a) == fernnet::read_file(a2));

    CHECK(run("synth --train-out x --test-out y --n-train 1 --n-test 4").exit_code == 2);
}

TEST_CASE("train emits metrics, writes a checkpoint, and is seed-deterministic") {
    const auto dir = work_dir();
    const auto train_path = (dir / "train.fds").string();
    const auto test_path = (dir / "test.fds").string();
    run("synth --train-out " + train_path + " --test-out " + test_path +
        " --n-train 32 --n-test 8 --seed 4");
    const auto cfg = tiny_config_path();

    const auto ck1 = (dir / "m1.fern").string();
    auto r = run("train --config " + cfg + " --data " + train_path + " --test " + test_path +
                 " --out " + ck1);
    CHECK(r.exit_code == 0);
    CHECK(count_lines_with(r.out, "epoch=") == 2);
    CHECK(r.out.find("train_loss=") != std::string::npos);
    CHECK(r.out.find("wall_seconds=") != std::string::npos);
    CHECK(fs::exists(ck1));

    const auto ck2 = (dir / "m2.fern").string();
    run("train --config " + cfg + " --data " + train_path + " --test " + test_path + " --out " + ck2);
    CHECK(fernnet::read_file(ck1) == fernnet::read_file(ck2));  // byte-identical

    SUBCASE("eval prints an accuracy for the checkpoint") {
        auto e = run("eval --checkpoint " + ck1 + " --data " + test_path);
        CHECK(e.exit_code == 0);
        CHECK(e.out.find("accuracy=") != std::string::npos);
    }

    SUBCASE("missing dataset path names the file and exits 2") {
        auto bad = run("train --config " + cfg + " --data /no/such/data.fds --out " +
                       (dir / "x.fern").string());
        CHECK(bad.exit_code == 2);
        CHECK(bad.err.find("/no/such/data.fds") != std::string::npos);
    }
}

TEST_CASE("report prints parameter counts and the energy ordering line") {
    const std::string fern_cfg = src_dir() + "/configs/fern.cfg";
    const std::string conv_cfg = src_dir() + "/configs/conv.cfg";
    const std::string bin_cfg = src_dir() + "/configs/binconv.cfg";

    auto r = run("report --config " + fern_cfg);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("37920") != std::string::npos);
    CHECK(r.out.find("37632") != std::string::npos);

    auto m = run("report --machine --config " + conv_cfg);
    CHECK(m.out.find("params.trainable = 79234") != std::string::npos);

    auto all = run("report --config " + fern_cfg + " --config " + conv_cfg + " --config " + bin_cfg +
                   " --energy-table " + src_dir() + "/configs/energy_default.cfg");
    CHECK(all.exit_code == 0);
    const auto pos = all.out.find("energy ordering: fern");
    REQUIRE(pos != std::string::npos);
    CHECK(all.out.find("binconv", pos) < all.out.find("conv (", pos));

    CHECK(run("report").exit_code == 2);
}

TEST_CASE("gradcheck passes at defaults and rejects zero trials") {
    auto r = run("gradcheck --trials 3 --margin 1e-3 --epsilon 1e-6 --seed 11");
    CHECK(r.exit_code == 0);
    CHECK(count_lines_with(r.out, "PASS") == 6);
    CHECK(count_lines_with(r.out, "FAIL") == 0);

    CHECK(run("gradcheck --trials 0").exit_code == 2);
}

TEST_CASE("gradcheck with margin 0 reports instead of hiding") {
    // Boundary sampling allowed: failures are possible but must surface as
    // reported lines with a matching exit code, never as a crash.
    auto r = run("gradcheck --trials 3 --margin 0 --epsilon 1e-6 --seed 13");
    CHECK((r.exit_code == 0 || r.exit_code == 1));
    CHECK(count_lines_with(r.out, "max_rel_err=") == 6);
    if (r.exit_code == 1) CHECK(count_lines_with(r.out, "FAIL") > 0);
}

TEST_CASE("a corrupt checkpoint is a usage error, not a crash") {
    const auto dir = work_dir();
    const auto bad = (dir / "bad.fern").string();
    std::ofstream(bad) << "not a checkpoint";
    auto r = run("eval --checkpoint " + bad + " --data also_missing.fds");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("error:") != std::string::npos);
}
