#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "soilspec/cli.hpp"
#include "soilspec/data.hpp"
#include "soilspec/synth.hpp"

using namespace soilspec;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("soilspec_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string make_library_csv(const TempDir& tmp, std::size_t n = 80) {
    MixtureLibraryOptions opt;
    opt.n_samples = n;
    opt.n_bands = 24;
    opt.n_endmembers = 3;
    opt.n_vars = 2;
    opt.seed = 3;
    opt.with_coords = true;
    const auto lib = make_mixture_library(opt);
    const auto path = tmp.file("lib.csv");
    save_library(lib, path);
    return path;
}

}  // namespace

TEST_CASE("unknown subcommand exits 2, help exits 0") {
    CHECK(cli::dispatch({"no-such-command"}) == 2);
    CHECK(cli::dispatch({"--help"}) == 0);
    CHECK(cli::dispatch({"split", "--help"}) == 0);
    CHECK(cli::dispatch({"train", "--help"}) == 0);
    CHECK(cli::dispatch({"evaluate", "--help"}) == 0);
    CHECK(cli::dispatch({"grid-search", "--help"}) == 0);
    CHECK(cli::dispatch({"sensitivity", "--help"}) == 0);
    CHECK(cli::dispatch({"simulate-sensor", "--help"}) == 0);
    CHECK(cli::dispatch({"gradcam", "--help"}) == 0);
    CHECK(cli::dispatch({"map", "--help"}) == 0);
    CHECK(cli::dispatch({"summary", "--help"}) == 0);
    CHECK(cli::dispatch({}) == 2);
    CHECK(cli::dispatch({"split", "--no-such-flag"}) == 2);
}

TEST_CASE("summary prints the architecture for a spec file") {
    TempDir tmp;
    const auto spec = tmp.file("best.json");
    std::ofstream out(spec);
    out << R"({"n_in":2048,"n_out":4,"p_min":4,"p_max":7,"n_refine":1,)"
        << R"("use_norm":true,"leak":0.2,"proj_hidden":70,"n_vars":12})";
    out.close();
    CHECK(cli::dispatch({"summary", "--spec", spec}) == 0);
    CHECK(cli::dispatch({"summary", "--spec", tmp.file("missing.json")}) == 2);
}

TEST_CASE("cross-field validation names both fields and exits 2") {
    TempDir tmp;
    const auto lib_csv = make_library_csv(tmp);
    const auto cfg = tmp.file("engine.json");
    std::ofstream out(cfg);
    out << R"({"data":")" << lib_csv << R"(","split":")" << lib_csv << R"(",)"
        << R"("out_dir":")" << tmp.file("run") << R"(",)"
        << R"("train":{"f_insz":16,"epochs":1},"net":{"n_in":32}})";
    out.close();
    CHECK(cli::dispatch({"train", "--config", cfg}) == 2);
}

TEST_CASE("full command-line workflow on a tiny library") {
    TempDir tmp;
    const auto lib_csv = make_library_csv(tmp);
    const auto split_json = tmp.file("split.json");

    REQUIRE(cli::dispatch({"split", "--data", lib_csv, "--out", split_json, "--fractions",
                           "0.7,0.15,0.15", "--seed", "3", "--bins", "4", "--audit",
                           tmp.file("audit.txt")}) == 0);
    CHECK(fs::exists(split_json));
    CHECK(fs::exists(split_json + ".manifest.json"));
    CHECK(fs::exists(tmp.file("audit.txt")));

    const auto run_dir = tmp.file("run");
    REQUIRE(cli::dispatch({"train", "--data", lib_csv, "--split", split_json, "--out", run_dir,
                           "--epochs", "2", "--f-insz", "16", "--p-min", "1", "--p-max", "2",
                           "--proj-hidden", "4", "--batch-size", "16", "--lr", "0.001",
                           "--seed", "1"}) == 0);
    const auto ckpt = run_dir + "/model.ckpt";
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(run_dir + "/manifest.json"));
    CHECK(fs::exists(run_dir + "/history.csv"));
    CHECK(fs::exists(run_dir + "/metrics.json"));

    const auto preds = tmp.file("preds.csv");
    const auto coords = tmp.file("coords.csv");
    REQUIRE(cli::dispatch({"evaluate", "--checkpoint", ckpt, "--data", lib_csv, "--split",
                           split_json, "--set", "test", "--out", tmp.file("metrics.json"),
                           "--dump-preds", preds, "--dump-coords", coords, "--scatter",
                           tmp.file("scatter")}) == 0);
    CHECK(fs::exists(preds));
    CHECK(fs::exists(coords));
    CHECK(fs::exists(tmp.file("scatter") + "/var0.csv"));

    REQUIRE(cli::dispatch({"gradcam", "--checkpoint", ckpt, "--data", lib_csv, "--split",
                           split_json, "--var", "var1", "--out", tmp.file("curve.csv")}) == 0);
    CHECK(fs::exists(tmp.file("curve.csv")));
    {
        std::ifstream in(tmp.file("curve.csv"));
        std::string header;
        std::getline(in, header);
        CHECK(header == "wavelength,weight");
    }

    REQUIRE(cli::dispatch({"map", "--pred", preds, "--coords", coords, "--size", "16x12",
                           "--var", "var0", "--out", tmp.file("map.pgm")}) == 0);
    CHECK(fs::exists(tmp.file("map.pgm")));
    CHECK(fs::exists(tmp.file("map.pgm") + ".json"));

    // Grid search + sensitivity over a 2-cell grid.
    const auto grid_json = tmp.file("grid.json");
    {
        std::ofstream out(grid_json);
        out << R"({"base":{"f_insz":16,"p_min":1,"p_max":2,"proj_hidden":4,"epochs":1,)"
            << R"("batch_size":16,"lr":0.001,"seed":1},"axes":{"leak":[0.0,0.2]}})";
    }
    const auto store = tmp.file("runs.jsonl");
    REQUIRE(cli::dispatch({"grid-search", "--grid", grid_json, "--data", lib_csv, "--split",
                           split_json, "--out", store, "--workers", "2"}) == 0);
    CHECK(fs::exists(store));
    REQUIRE(cli::dispatch({"sensitivity", "--runs", store, "--metric", "r2", "--out",
                           tmp.file("tables")}) == 0);
    CHECK(fs::exists(tmp.file("tables") + "/r2_leak.csv"));
}

TEST_CASE("simulate-sensor subcommand and config dump") {
    TempDir tmp;
    // Sensor simulation needs a realistic wavelength span.
    MixtureLibraryOptions opt;
    opt.n_samples = 6;
    opt.n_bands = 512;
    opt.n_vars = 2;
    opt.seed = 9;
    const auto lib = make_mixture_library(opt);
    const auto lib_csv = tmp.file("wide.csv");
    save_library(lib, lib_csv);

    const auto cfg_path = tmp.file("prisma.json");
    REQUIRE(cli::dispatch({"simulate-sensor", "--dump-config", cfg_path}) == 0);
    CHECK(fs::exists(cfg_path));

    const auto sim_csv = tmp.file("sim.csv");
    REQUIRE(cli::dispatch({"simulate-sensor", "--data", lib_csv, "--sensor", cfg_path, "--out",
                           sim_csv}) == 0);
    const auto sim = load_library(sim_csv);
    CHECK(sim.n_bands() == 170);
    CHECK(sim.n_samples() == 6);
    CHECK(fs::exists(sim_csv + ".manifest.json"));
}

TEST_CASE("manifest records the resolved config and its hash") {
    TempDir tmp;
    const auto lib_csv = make_library_csv(tmp, 40);
    const auto split_json = tmp.file("split.json");
    REQUIRE(cli::dispatch({"split", "--data", lib_csv, "--out", split_json, "--seed", "7",
                           "--bins", "4"}) == 0);
    std::ifstream in(split_json + ".manifest.json");
    const auto manifest = nlohmann::json::parse(in);
    CHECK(manifest["subcommand"] == "split");
    CHECK(manifest["config"]["seed"] == 7);
    CHECK(manifest["seed"] == 7);
    CHECK(manifest.contains("config_hash"));
    CHECK(manifest["version"] == cli::kVersion);
}
