#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "soilspec/grid.hpp"
#include "soilspec/synth.hpp"
#include "soilspec/train.hpp"

using namespace soilspec;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("soilspec_train_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

SpectralLibrary tiny_library(std::size_t n = 60, std::uint64_t seed = 2) {
    MixtureLibraryOptions opt;
    opt.n_samples = n;
    opt.n_bands = 24;
    opt.n_endmembers = 3;
    opt.n_vars = 2;
    opt.seed = seed;
    return make_mixture_library(opt);
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.f_min = 400.0;
    cfg.f_max = 2500.0;
    cfg.f_insz = 16;
    cfg.p_min = 1;
    cfg.p_max = 2;
    cfg.n_out = 4;
    cfg.proj_hidden = 4;
    cfg.n_refine = 1;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.lr = 1e-3;
    cfg.seed = 5;
    return cfg;
}

GridDefinition tiny_grid() {
    GridDefinition grid;
    grid.base = tiny_config();
    grid.base.epochs = 1;
    grid.axes.push_back({"leak", {nlohmann::json(0.0), nlohmann::json(0.2)}});
    grid.axes.push_back({"lr", {nlohmann::json(1e-3), nlohmann::json(1e-4),
                                nlohmann::json(1e-2)}});
    return grid;
}

}  // namespace

TEST_CASE("grid enumeration counts and order") {
    const GridDefinition grid = tiny_grid();
    const auto configs = enumerate_grid(grid);
    REQUIRE(configs.size() == 6);

    // Lexicographic: first axis slowest, last fastest.
    CHECK(configs[0].leak == 0.0);
    CHECK(configs[0].lr == 1e-3);
    CHECK(configs[1].leak == 0.0);
    CHECK(configs[1].lr == 1e-4);
    CHECK(configs[3].leak == 0.2);
    CHECK(configs[3].lr == 1e-3);

    // No duplicates.
    std::set<std::string> ids;
    for (const auto& c : configs) ids.insert(run_id_for(c));
    CHECK(ids.size() == configs.size());
}

TEST_CASE("grid enumeration of the published axis sizes") {
    GridDefinition grid;
    grid.base = tiny_config();
    grid.axes = {
        {"f_min", {450, 800, 1200}},
        {"f_max", {2300, 2400, 2500}},
        {"f_insz", {512, 1024, 2048}},
        {"leak", {0.0, 0.2}},
        {"use_norm", {true, false}},
        {"lr", {1e-3, 1e-4}},
        {"loss", {"l1", "l2", "hybrid"}},
    };
    CHECK(grid.total() == 648);
    CHECK(enumerate_grid(grid).size() == 648);
}

TEST_CASE("single-value axes give one config") {
    GridDefinition grid;
    grid.base = tiny_config();
    grid.axes = {{"lr", {1e-3}}, {"leak", {0.2}}};
    CHECK(enumerate_grid(grid).size() == 1);
}

TEST_CASE("zero epochs leaves the model untouched with empty history") {
    const auto lib = tiny_library();
    const auto split = stratified_split(lib, {0.7, 0.15, 0.15}, 1, 3);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 0;

    PreparedData data = prepare_data(lib, split, cfg);
    const auto scaler = fit_target_scaler(lib, split.train);
    nn::Model model = build_network(cfg.net_spec(lib.n_vars()), cfg.seed);
    const auto before = model.state_snapshot();
    const auto result = train(model, data, cfg, scaler, {});
    CHECK(result.history.empty());
    CHECK(model.state_snapshot() == before);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    const auto lib = tiny_library();
    const auto split = stratified_split(lib, {0.7, 0.15, 0.15}, 1, 3);
    TrainConfig cfg = tiny_config();
    cfg.lr = 0.0;
    cfg.epochs = 2;
    cfg.use_norm = false;  // running stats would still move under training

    PreparedData data = prepare_data(lib, split, cfg);
    const auto scaler = fit_target_scaler(lib, split.train);
    nn::Model model = build_network(cfg.net_spec(lib.n_vars()), cfg.seed);
    const auto before = model.state_snapshot();
    const auto result = train(model, data, cfg, scaler, {});
    CHECK(result.history.size() == 2);
    CHECK(model.state_snapshot() == before);
}

TEST_CASE("training reduces the loss on a learnable problem") {
    const auto lib = tiny_library(120, 8);
    const auto split = stratified_split(lib, {0.7, 0.15, 0.15}, 2, 3);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 30;
    cfg.lr = 1e-3;
    TrainResult result;
    (void)run_training(lib, split, cfg, &result);
    REQUIRE(result.history.size() == 30);
    CHECK(result.history.back().train_loss < result.history.front().train_loss);
    CHECK(result.best_epoch >= 0);
}

TEST_CASE("a trailing singleton batch does not break batch normalization") {
    const auto lib = tiny_library(65, 6);  // 45 train samples, batch 4 -> last batch of 1
    const auto split = stratified_split(lib, {0.7, 0.15, 0.15}, 1, 3);
    REQUIRE(split.train.size() % 4 == 1);
    TrainConfig cfg = tiny_config();
    cfg.batch_size = 4;
    cfg.epochs = 1;
    TrainResult result;
    CHECK_NOTHROW((void)run_training(lib, split, cfg, &result));
}

TEST_CASE("diverging training reports the epoch") {
    const auto lib = tiny_library();
    const auto split = stratified_split(lib, {0.8, 0.1, 0.1}, 1, 3);
    TrainConfig cfg = tiny_config();
    cfg.loss = LossKind::L2;
    cfg.lr = 1e18;
    cfg.use_norm = false;
    cfg.epochs = 50;
    CHECK_THROWS_AS((void)run_training(lib, split, cfg, nullptr), TrainingDiverged);
}

TEST_CASE("hybrid loss participates in training end to end") {
    const auto lib = tiny_library(80, 3);
    const auto split = stratified_split(lib, {0.7, 0.15, 0.15}, 2, 3);
    TrainConfig cfg = tiny_config();
    cfg.loss = LossKind::Hybrid;
    cfg.n_bins = 4;
    cfg.epochs = 3;
    TrainResult result;
    TrainedModel tm = run_training(lib, split, cfg, &result);
    CHECK(tm.codecs.size() == lib.n_vars());
    PreparedData data = prepare_data(lib, split, cfg);
    const auto ev = evaluate_model(tm.model, data.test, cfg, tm.scaler, tm.codecs,
                                   tm.variable_names);
    CHECK(std::isfinite(ev.global.r2));
}

TEST_CASE("trained checkpoint round trips through save and load") {
    const auto lib = tiny_library(80, 9);
    const auto split = stratified_split(lib, {0.7, 0.15, 0.15}, 2, 3);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 3;
    TrainedModel tm = run_training(lib, split, cfg, nullptr);

    TempDir tmp;
    const auto path = tmp.file("model.ckpt");
    save_trained(tm, path);
    TrainedModel back = load_trained(path);
    CHECK(back.variable_names == tm.variable_names);
    CHECK(back.config.f_insz == tm.config.f_insz);

    PreparedData data = prepare_data(lib, split, cfg);
    const Tensor p1 = predict_scaled(tm.model, data.test.x, cfg, tm.scaler, tm.codecs);
    const Tensor p2 = predict_scaled(back.model, data.test.x, back.config, back.scaler,
                                     back.codecs);
    REQUIRE(p1.numel() == p2.numel());
    for (std::size_t i = 0; i < p1.numel(); ++i) CHECK(p1[i] == p2[i]);
}

TEST_CASE("job store folds records by last state") {
    TempDir tmp;
    const auto path = tmp.file("runs.jsonl");
    JobStore store(path);
    RunRecord rec;
    rec.run_id = "abc";
    rec.status = "running";
    rec.config = tiny_config();
    store.append(rec);
    rec.status = "done";
    rec.wall_time_s = 3.5;
    store.append(rec);

    const auto contents = JobStore::load(path);
    REQUIRE(contents.runs.count("abc") == 1);
    CHECK(contents.runs.at("abc").status == "done");
    CHECK(contents.runs.at("abc").wall_time_s == 3.5);
}

TEST_CASE("job store tolerates a torn trailing line") {
    TempDir tmp;
    const auto path = tmp.file("runs.jsonl");
    JobStore store(path);
    RunRecord rec;
    rec.run_id = "abc";
    rec.status = "done";
    rec.config = tiny_config();
    store.append(rec);
    {
        std::ofstream out(path, std::ios::app);
        out << "{\"type\":\"run\",\"run_id\":\"trunc";  // crash mid-write
    }
    const auto contents = JobStore::load(path);
    CHECK(contents.runs.size() == 1);
}

TEST_CASE("run_grid completes a grid, resumes idempotently and is worker-count invariant") {
    const auto lib = tiny_library(60, 4);
    const auto split = stratified_split(lib, {0.7, 0.15, 0.15}, 2, 3);
    const GridDefinition grid = tiny_grid();

    TempDir tmp;
    const auto store1 = tmp.file("runs1.jsonl");
    const auto runs1 = run_grid(grid, lib, split, store1, 1);
    REQUIRE(runs1.size() == 6);
    for (const auto& [id, rec] : runs1) CHECK(rec.status == "done");

    // Idempotent resume: the store file does not change at all.
    const auto before = std::filesystem::file_size(store1);
    (void)run_grid(grid, lib, split, store1, 1);
    CHECK(std::filesystem::file_size(store1) == before);

    // Worker-count invariance of every metric table.
    const auto store4 = tmp.file("runs4.jsonl");
    const auto runs4 = run_grid(grid, lib, split, store4, 4);
    REQUIRE(runs4.size() == 6);
    for (const auto& [id, rec] : runs1) {
        REQUIRE(runs4.count(id) == 1);
        const auto& other = runs4.at(id);
        CHECK(other.val_metrics == rec.val_metrics);
        CHECK(other.test_metrics == rec.test_metrics);
    }
}

TEST_CASE("run_grid resumes after a crash without retraining done records") {
    const auto lib = tiny_library(60, 4);
    const auto split = stratified_split(lib, {0.7, 0.15, 0.15}, 2, 3);
    const GridDefinition grid = tiny_grid();
    const auto configs = enumerate_grid(grid);

    TempDir tmp;
    const auto path = tmp.file("runs.jsonl");
    JobStore store(path);
    store.append_grid_header(grid);

    // Fake a crashed session: two done records carrying sentinel metrics that
    // a real run could never produce, plus one orphaned "running" record.
    RunRecord done1;
    done1.run_id = run_id_for(configs[0]);
    done1.status = "done";
    done1.config = configs[0];
    done1.variables = lib.variable_names;
    done1.val_metrics["r2"] = {123.0, 123.0};
    done1.test_metrics["r2"] = {123.0, 123.0};
    store.append(done1);
    RunRecord done2 = done1;
    done2.run_id = run_id_for(configs[3]);
    done2.config = configs[3];
    store.append(done2);
    RunRecord orphan;
    orphan.run_id = run_id_for(configs[1]);
    orphan.status = "running";
    orphan.config = configs[1];
    store.append(orphan);

    const auto runs = run_grid(grid, lib, split, path, 2);
    REQUIRE(runs.size() == 6);
    for (const auto& [id, rec] : runs) CHECK(rec.status == "done");
    CHECK(runs.at(done1.run_id).test_metrics.at("r2") == std::vector<double>{123.0, 123.0});
    CHECK(runs.at(done2.run_id).test_metrics.at("r2") == std::vector<double>{123.0, 123.0});
    CHECK(runs.at(orphan.run_id).test_metrics.at("r2") != std::vector<double>{123.0, 123.0});
}

TEST_CASE("sensitivity marginals: hand-computed aggregations") {
    GridDefinition grid;
    grid.base = tiny_config();
    grid.axes = {{"use_norm", {true, false}}, {"leak", {0.0, 0.2}}};

    auto make_done = [&](bool norm, double leak, double r2a, double r2b) {
        RunRecord r;
        r.config = grid.base;
        r.config.use_norm = norm;
        r.config.leak = leak;
        r.run_id = run_id_for(r.config);
        r.status = "done";
        r.variables = {"a", "b"};
        r.test_metrics["r2"] = {r2a, r2b};
        r.val_metrics["r2"] = {r2a, r2b};
        return r;
    };

    SUBCASE("single done run fills every row with its own scores") {
        const std::vector<RunRecord> done = {make_done(true, 0.0, 0.4, 0.2)};
        GridDefinition single = grid;
        single.axes = {{"use_norm", {true}}, {"leak", {0.0}}};
        const auto tables = sensitivity_marginals(done, single.axes, "r2", "test");
        REQUIRE(tables.size() == 2);
        for (const auto& t : tables) {
            REQUIRE(t.cells.size() == 1);
            CHECK(t.cells[0][0] == 0.4);
            CHECK(t.cells[0][1] == 0.2);
            CHECK(t.cells[0][2] == doctest::Approx(0.3));  // global
        }
    }

    SUBCASE("two runs differing only in use_norm appear on their own rows") {
        const std::vector<RunRecord> done = {make_done(true, 0.0, 0.2, 0.2),
                                             make_done(false, 0.0, 0.4, 0.4)};
        GridDefinition two = grid;
        two.axes = {{"use_norm", {true, false}}};
        const auto tables = sensitivity_marginals(done, two.axes, "r2", "test");
        REQUIRE(tables.size() == 1);
        CHECK(tables[0].cells[0][2] == doctest::Approx(0.2));
        CHECK(tables[0].cells[1][2] == doctest::Approx(0.4));
    }

    SUBCASE("2x2 grid marginals equal pairwise means and obey the total law") {
        const std::vector<RunRecord> done = {
            make_done(true, 0.0, 0.1, 0.3), make_done(true, 0.2, 0.2, 0.4),
            make_done(false, 0.0, 0.5, 0.7), make_done(false, 0.2, 0.6, 0.8)};
        const auto tables = sensitivity_marginals(done, grid.axes, "r2", "test");
        REQUIRE(tables.size() == 2);

        // use_norm=true row on variable a: mean(0.1, 0.2) = 0.15
        CHECK(tables[0].cells[0][0] == doctest::Approx(0.15).epsilon(1e-12));
        CHECK(tables[0].cells[1][0] == doctest::Approx(0.55).epsilon(1e-12));
        // leak=0.0 row on variable b: mean(0.3, 0.7) = 0.5
        CHECK(tables[1].cells[0][1] == doctest::Approx(0.5).epsilon(1e-12));

        // Count-weighted mean of rows equals the grand mean of all runs.
        double grand = 0.0;
        for (const auto& r : done) {
            const auto& v = r.test_metrics.at("r2");
            grand += (v[0] + v[1]) / 2.0;
        }
        grand /= double(done.size());
        for (const auto& t : tables) {
            double weighted = 0.0;
            std::size_t total = 0;
            for (std::size_t row = 0; row < t.cells.size(); ++row) {
                weighted += t.cells[row].back() * double(t.counts[row]);
                total += t.counts[row];
            }
            CHECK(weighted / double(total) == doctest::Approx(grand).epsilon(1e-12));
        }
    }

    SUBCASE("axis value with no done runs is an error") {
        const std::vector<RunRecord> done = {make_done(true, 0.0, 0.1, 0.3)};
        CHECK_THROWS_AS((void)sensitivity_marginals(done, grid.axes, "r2", "test"),
                        std::invalid_argument);
    }

    SUBCASE("no done runs is an error") {
        CHECK_THROWS_AS((void)sensitivity_marginals({}, grid.axes, "r2", "test"),
                        std::invalid_argument);
    }
}

TEST_CASE("train config json round trip and validation") {
    TrainConfig cfg = tiny_config();
    cfg.loss = LossKind::Hybrid;
    const auto j = cfg.to_json();
    const TrainConfig back = TrainConfig::from_json(j);
    CHECK(back.f_insz == cfg.f_insz);
    CHECK(back.loss == LossKind::Hybrid);
    CHECK(back.seed == cfg.seed);

    TrainConfig bad = tiny_config();
    bad.f_insz = 100;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny_config();
    bad.f_min = 3000;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
