#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#ifndef RRELU_CLI_PATH
#error "RRELU_CLI_PATH must point at the CLI binary"
#endif

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("rrelu-cli-test-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
    const std::string cmd =
        std::string(RRELU_CLI_PATH) + " " + args + " > /dev/null 2> /dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// synthetic dataset flags shared by every subcommand that loads data
const std::string kDataArgs =
    "--num-classes 3 --dataset blobs --blobs-n 64 --blobs-sep 3.0";
// quick synthetic training run used as the fixture for the other subcommands
const std::string kTrainArgs =
    "--model fcnn-4-8-3 " + kDataArgs + " --epochs 2 --batch-size 32";

}  // namespace

TEST_CASE("usage errors exit with code 2") {
    CHECK(run("") == 2);                      // missing subcommand
    CHECK(run("frobnicate") == 2);            // unknown subcommand
    CHECK(run("train --no-such-flag") == 2);  // unknown flag
    CHECK(run("select-gamma") == 2);          // missing required --checkpoint
    CHECK(run("--help") == 0);
}

TEST_CASE("train smoke run produces checkpoint, run log and config echo") {
    TempDir tmp;
    const auto out = (tmp.path / "run").string();
    CHECK(run("train " + kTrainArgs + " --out " + out) == 0);
    CHECK(fs::exists(fs::path(out) / "checkpoint" / "manifest.json"));
    CHECK(fs::exists(fs::path(out) / "checkpoint" / "weights.bin"));
    CHECK(fs::exists(fs::path(out) / "runlog.csv"));
    CHECK(fs::exists(fs::path(out) / "config.json"));
    CHECK(!fs::exists(fs::path(out) / ".lock"));  // released on exit
}

TEST_CASE("a locked output directory is refused") {
    TempDir tmp;
    const auto out = (tmp.path / "run").string();
    fs::create_directories(out);
    std::ofstream(fs::path(out) / ".lock") << "locked\n";
    CHECK(run("train " + kTrainArgs + " --out " + out) == 2);
}

TEST_CASE("type2 init without a donor checkpoint is a usage error") {
    TempDir tmp;
    const auto out = (tmp.path / "run").string();
    CHECK(run("train " + kTrainArgs + " --init type2 --out " + out) == 2);
}

TEST_CASE("config files: unknown keys rejected, flags override values") {
    TempDir tmp;

    std::ofstream(tmp.path / "bad.json") << "{\"epochz\": 3}";
    CHECK(run("train " + kTrainArgs + " --config " + (tmp.path / "bad.json").string() +
              " --out " + (tmp.path / "a").string()) == 2);

    std::ofstream(tmp.path / "notjson.json") << "{oops";
    CHECK(run("train " + kTrainArgs + " --config " + (tmp.path / "notjson.json").string() +
              " --out " + (tmp.path / "b").string()) == 2);

    // config sets epochs=1 and a separation; the explicit flag wins for epochs
    std::ofstream(tmp.path / "cfg.json") << "{\"epochs\": 1, \"blobs_sep\": 3.0}";
    const auto out = (tmp.path / "c").string();
    CHECK(run("train --model fcnn-4-8-3 --num-classes 3 --dataset blobs --blobs-n 64 "
              "--batch-size 32 --config " +
              (tmp.path / "cfg.json").string() + " --epochs 2 --out " + out) == 0);
    std::ifstream echo(fs::path(out) / "config.json");
    nlohmann::json j;
    echo >> j;
    CHECK(j.at("epochs").get<int>() == 2);          // flag overrode the file
    CHECK(j.at("blobs_sep").get<double>() == 3.0);  // file value survived
}

TEST_CASE("select-gamma, prune, report and analyze chain on a trained checkpoint") {
    TempDir tmp;
    const auto run_dir = (tmp.path / "run").string();
    REQUIRE(run("train --model fcnn-4-8-3 " + kDataArgs +
                " --epochs 10 --batch-size 32 --out " + run_dir) == 0);
    const auto ckpt = (fs::path(run_dir) / "checkpoint").string();

    const auto sel_dir = (tmp.path / "sel").string();
    CHECK(run("select-gamma " + kDataArgs + " --checkpoint " + ckpt +
              " --tolerance-pp 0.5 --out " + sel_dir) == 0);
    const auto gamma_file = (fs::path(sel_dir) / "gamma.json").string();
    REQUIRE(fs::exists(gamma_file));
    {
        std::ifstream f(gamma_file);
        nlohmann::json j;
        f >> j;
        CHECK(j.contains("gamma"));
        CHECK(j.contains("baseline_accuracy"));
        CHECK(j.contains("report_accuracy"));
    }

    const auto prune_dir = (tmp.path / "pruned").string();
    CHECK(run("prune --checkpoint " + ckpt + " --gamma-file " + gamma_file + " --out " +
              prune_dir) == 0);
    CHECK(fs::exists(fs::path(prune_dir) / "checkpoint" / "manifest.json"));
    CHECK(fs::exists(fs::path(prune_dir) / "mask.json"));
    CHECK(fs::exists(fs::path(prune_dir) / "savings.txt"));
    CHECK(fs::exists(fs::path(prune_dir) / "savings.csv"));

    CHECK(run("report --checkpoint " + ckpt + " --pruned " +
              (fs::path(prune_dir) / "checkpoint").string()) == 0);

    const auto an_dir = (tmp.path / "analysis").string();
    CHECK(run("analyze --checkpoint " + ckpt + " --hist 8 --filter-path --out " + an_dir) ==
          0);
    CHECK(fs::exists(fs::path(an_dir) / "hist.csv"));
    CHECK(fs::exists(fs::path(an_dir) / "slopes.csv"));
    CHECK(fs::exists(fs::path(an_dir) / "filter_path.json"));

    // prune without any threshold source is a usage error
    CHECK(run("prune --checkpoint " + ckpt + " --out " + (tmp.path / "x").string()) == 2);
    // a missing checkpoint is a runtime failure, not a usage error
    CHECK(run("report --checkpoint /nonexistent/ckpt") == 1);
}
