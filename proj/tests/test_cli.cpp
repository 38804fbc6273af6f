#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kBin = FORECASTER_BIN;
const fs::path kWs = "cli_ws";

int run(const std::string& args) {
    std::string cmd = kBin + " " + args + " >cli_ws/stdout.txt 2>cli_ws/stderr.txt";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

struct Workspace {
    Workspace() {
        fs::remove_all(kWs);
        fs::create_directories(kWs);
    }
};

// tiny but complete training setup shared by the pipeline tests
const char* kConfig = R"({
  "model": {"d_model": 8, "heads": 1, "encoder_layers": 1, "decoder_layers": 1,
            "window": 6, "dropout": 0.0},
  "train": {"epochs": 2, "batch_size": 10, "seed": 3},
  "data": {"path": "cli_ws/series.csv"},
  "out_dir": "cli_ws/out"
})";

void make_series() {
    REQUIRE(run("synth --kind sine --length 60 --noise 0.02 --seed 5 --aux 1 "
                "--out-file cli_ws/series.csv") == 0);
}

} // namespace

TEST_CASE("synth is deterministic and refuses bad kinds") {
    Workspace ws;
    REQUIRE(run("synth --kind mutation --length 50 --seed 9 --out-file cli_ws/a.csv") == 0);
    REQUIRE(run("synth --kind mutation --length 50 --seed 9 --out-file cli_ws/b.csv") == 0);
    CHECK(slurp(kWs / "a.csv") == slurp(kWs / "b.csv"));
    CHECK(run("synth --kind nope --out-file cli_ws/c.csv") == 3);
}

TEST_CASE("train writes config, checkpoint and loss history") {
    Workspace ws;
    make_series();
    write_file(kWs / "config.json", kConfig);
    REQUIRE(run("train --config cli_ws/config.json") == 0);
    CHECK(fs::exists(kWs / "out/config.json"));
    CHECK(fs::exists(kWs / "out/checkpoint.json"));
    CHECK(fs::exists(kWs / "out/loss_history.csv"));

    json cfg = json::parse(slurp(kWs / "out/config.json"));
    CHECK(cfg["model"]["d_input"] == 2);
    CHECK(cfg["train"]["epochs"] == 2);

    std::string losses = slurp(kWs / "out/loss_history.csv");
    CHECK(losses.rfind("epoch,mean_loss", 0) == 0);

    SUBCASE("command-line flags override the config file") {
        REQUIRE(run("train --config cli_ws/config.json --epochs 1 --out cli_ws/out1") == 0);
        json cfg1 = json::parse(slurp(kWs / "out1/config.json"));
        CHECK(cfg1["train"]["epochs"] == 1);
    }

    SUBCASE("predict is bitwise reproducible") {
        REQUIRE(run("predict --checkpoint cli_ws/out/checkpoint.json --config cli_ws/config.json "
                    "--out cli_ws/p1") == 0);
        REQUIRE(run("predict --checkpoint cli_ws/out/checkpoint.json --config cli_ws/config.json "
                    "--out cli_ws/p2") == 0);
        std::string p1 = slurp(kWs / "p1/predictions.csv");
        CHECK(p1 == slurp(kWs / "p2/predictions.csv"));
        CHECK(p1.rfind("index,truth0,prediction0", 0) == 0);
    }

    SUBCASE("eval reports metrics with rmse >= mae") {
        REQUIRE(run("eval --checkpoint cli_ws/out/checkpoint.json --config cli_ws/config.json "
                    "--out cli_ws/e") == 0);
        json m = json::parse(slurp(kWs / "e/metrics.json"));
        REQUIRE(m.contains("y"));
        CHECK(m["y"]["rmse_normalized"].get<double>() >= m["y"]["mae_normalized"].get<double>());
        CHECK(m["y"]["rmse_original"].get<double>() >= m["y"]["mae_original"].get<double>());
    }
}

TEST_CASE("error exit codes") {
    Workspace ws;
    // missing data file
    CHECK(run("train --data cli_ws/does_not_exist.csv --window 6 --epochs 1") == 2);
    // no window configured
    make_series();
    CHECK(run("train --data cli_ws/series.csv --epochs 1") == 3);
    // unknown target column
    CHECK(run("train --data cli_ws/series.csv --window 6 --epochs 1 --targets bogus") == 3);
    // malformed checkpoint
    write_file(kWs / "bad.json", "{\"format\": \"other\"}");
    CHECK(run("predict --checkpoint cli_ws/bad.json --data cli_ws/series.csv") == 2);
}

TEST_CASE("gradcheck passes on the default micro model") {
    Workspace ws;
    REQUIRE(run("gradcheck --seed 1 --out cli_ws/gc") == 0);
    std::string report = slurp(kWs / "gc/gradcheck.txt");
    CHECK(report.find("FAIL") == std::string::npos);
    CHECK(report.find("max_rel_error") != std::string::npos);
}
