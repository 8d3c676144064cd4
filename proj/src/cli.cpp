#include "soilspec/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "soilspec/arch.hpp"
#include "soilspec/csv.hpp"
#include "soilspec/data.hpp"
#include "soilspec/grid.hpp"
#include "soilspec/interpret.hpp"
#include "soilspec/rng.hpp"
#include "soilspec/sensor.hpp"
#include "soilspec/train.hpp"

namespace soilspec::cli {

namespace {

namespace fs = std::filesystem;

/// Configuration problems exit with code 2; every violated field is listed.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string hash_hex(const std::string& s) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(s)));
    return buf;
}

void write_manifest(const std::string& path, const std::string& subcommand,
                    const nlohmann::ordered_json& config) {
    nlohmann::ordered_json m;
    m["tool"] = "soilspec";
    m["version"] = kVersion;
    m["subcommand"] = subcommand;
    m["config"] = config;
    m["config_hash"] = hash_hex(config.dump());
    if (config.contains("seed")) m["seed"] = config["seed"];
    else if (config.contains("train") && config["train"].contains("seed"))
        m["seed"] = config["train"]["seed"];
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << m.dump(2) << '\n';
}

std::array<double, 3> parse_fractions(const std::string& s) {
    std::array<double, 3> f{};
    std::istringstream is(s);
    char c1 = 0, c2 = 0;
    if (!(is >> f[0] >> c1 >> f[1] >> c2 >> f[2]) || c1 != ',' || c2 != ',')
        throw UsageError("fractions must be three comma-separated numbers");
    return f;
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
    std::size_t w = 0, h = 0;
    char x = 0;
    std::istringstream is(s);
    if (!(is >> w >> x >> h) || (x != 'x' && x != 'X') || w == 0 || h == 0)
        throw UsageError("size must look like WxH, e.g. 256x192");
    return {w, h};
}

void apply(const CLI::Option* opt, double& field, double value) {
    if (opt->count() > 0) field = value;
}
void apply(const CLI::Option* opt, std::size_t& field, std::size_t value) {
    if (opt->count() > 0) field = value;
}
void apply(const CLI::Option* opt, int& field, int value) {
    if (opt->count() > 0) field = value;
}

// ---------------------------------------------------------------------------

struct SplitArgs {
    std::string data, out, audit_out;
    std::string fractions = "0.8,0.1,0.1";
    std::uint64_t seed = 0;
    int bins = 10;
};

int cmd_split(const SplitArgs& a) {
    const auto fractions = parse_fractions(a.fractions);
    const SpectralLibrary lib = load_library(a.data);
    const SplitAssignment split = stratified_split(lib, fractions, a.seed, a.bins);
    save_split(split, a.out);

    const auto audit = quantile_audit(lib, split, a.bins);
    double max_dev = 0.0;
    for (const auto& block : audit) {
        const auto& full = block.rows.front();
        for (const auto& row : block.rows)
            for (std::size_t b = 0; b < row.percent.size(); ++b)
                max_dev = std::max(max_dev, std::abs(row.percent[b] - full.percent[b]));
    }
    if (!a.audit_out.empty()) {
        std::ofstream out(a.audit_out);
        if (!out) throw std::runtime_error("cannot write file: " + a.audit_out);
        out << format_audit(audit);
    }

    nlohmann::ordered_json cfg;
    cfg["data"] = a.data;
    cfg["out"] = a.out;
    cfg["fractions"] = fractions;
    cfg["seed"] = a.seed;
    cfg["n_strat_bins"] = a.bins;
    write_manifest(a.out + ".manifest.json", "split", cfg);

    std::cout << "split: " << split.train.size() << " train / " << split.val.size() << " val / "
              << split.test.size() << " test (" << lib.dropped_rows << " rows dropped at load)\n"
              << "max audit deviation vs full library: " << max_dev << " pp\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config_path, data, split, out_dir, sensor;
    TrainConfig overrides;
    const CLI::Option *o_epochs = nullptr, *o_seed = nullptr, *o_lr = nullptr,
                      *o_batch = nullptr, *o_fmin = nullptr, *o_fmax = nullptr,
                      *o_finsz = nullptr, *o_leak = nullptr, *o_wd = nullptr,
                      *o_pmin = nullptr, *o_pmax = nullptr, *o_nout = nullptr,
                      *o_hidden = nullptr, *o_refine = nullptr, *o_bins = nullptr;
    std::string loss;
    std::string norm;  // "on" | "off" | ""
};

int cmd_train(const TrainArgs& a) {
    nlohmann::ordered_json engine = nlohmann::ordered_json::object();
    if (!a.config_path.empty()) {
        std::ifstream in(a.config_path);
        if (!in) throw UsageError("cannot open config: " + a.config_path);
        engine = nlohmann::ordered_json::parse(in);
    }
    std::string data = !a.data.empty() ? a.data : engine.value("data", std::string{});
    std::string split_path = !a.split.empty() ? a.split : engine.value("split", std::string{});
    std::string out_dir = !a.out_dir.empty() ? a.out_dir : engine.value("out_dir", std::string{});
    std::string sensor = !a.sensor.empty() ? a.sensor : engine.value("sensor", std::string{});

    TrainConfig cfg;
    if (engine.contains("train")) cfg = TrainConfig::from_json(engine["train"]);
    apply(a.o_epochs, cfg.epochs, a.overrides.epochs);
    apply(a.o_seed, cfg.seed, a.overrides.seed);
    apply(a.o_lr, cfg.lr, a.overrides.lr);
    apply(a.o_batch, cfg.batch_size, a.overrides.batch_size);
    apply(a.o_fmin, cfg.f_min, a.overrides.f_min);
    apply(a.o_fmax, cfg.f_max, a.overrides.f_max);
    apply(a.o_finsz, cfg.f_insz, a.overrides.f_insz);
    apply(a.o_leak, cfg.leak, a.overrides.leak);
    apply(a.o_wd, cfg.weight_decay, a.overrides.weight_decay);
    apply(a.o_pmin, cfg.p_min, a.overrides.p_min);
    apply(a.o_pmax, cfg.p_max, a.overrides.p_max);
    apply(a.o_nout, cfg.n_out, a.overrides.n_out);
    apply(a.o_hidden, cfg.proj_hidden, a.overrides.proj_hidden);
    apply(a.o_refine, cfg.n_refine, a.overrides.n_refine);
    apply(a.o_bins, cfg.n_bins, a.overrides.n_bins);
    if (!a.loss.empty()) cfg.loss = loss_kind_from_string(a.loss);
    if (a.norm == "on") cfg.use_norm = true;
    if (a.norm == "off") cfg.use_norm = false;

    // Collect every violated field before bailing out.
    std::vector<std::string> problems;
    if (data.empty() || !fs::exists(data)) problems.push_back("data: missing file '" + data + "'");
    if (split_path.empty() || !fs::exists(split_path))
        problems.push_back("split: missing file '" + split_path + "'");
    if (out_dir.empty()) problems.push_back("out_dir: required");
    if (!sensor.empty() && !fs::exists(sensor))
        problems.push_back("sensor: missing file '" + sensor + "'");
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    if (engine.contains("net") && engine["net"].contains("n_in")) {
        const auto n_in = engine["net"]["n_in"].get<std::size_t>();
        if (n_in != cfg.f_insz)
            problems.push_back("train.f_insz (" + std::to_string(cfg.f_insz) +
                               ") != net.n_in (" + std::to_string(n_in) + ")");
    }
    if (!problems.empty()) {
        std::string msg = "config validation failed:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw UsageError(msg);
    }

    fs::create_directories(out_dir);
    nlohmann::ordered_json manifest_cfg;
    manifest_cfg["data"] = data;
    manifest_cfg["split"] = split_path;
    manifest_cfg["out_dir"] = out_dir;
    if (!sensor.empty()) manifest_cfg["sensor"] = sensor;
    manifest_cfg["train"] = cfg.to_json();
    write_manifest(out_dir + "/manifest.json", "train", manifest_cfg);

    SpectralLibrary lib = load_library(data);
    if (!sensor.empty()) lib = simulate_sensor_library(lib, load_sensor_config(sensor));
    const SplitAssignment split = load_split(split_path);

    TrainResult result;
    TrainedModel tm = run_training(lib, split, cfg, &result);
    save_trained(tm, out_dir + "/model.ckpt");

    {
        std::ofstream hist(out_dir + "/history.csv");
        hist << "epoch,train_loss,val_r2\n";
        for (const auto& rec : result.history)
            hist << rec.epoch << ',' << rec.train_loss << ',' << rec.val_r2 << '\n';
    }

    PreparedData prepared = prepare_data(lib, split, cfg);
    nlohmann::ordered_json metrics;
    for (const std::string set_name : {"val", "test"}) {
        if (prepared.set(set_name).size() == 0) continue;
        const auto ev = evaluate_model(tm.model, prepared.set(set_name), cfg, tm.scaler,
                                       tm.codecs, tm.variable_names);
        nlohmann::ordered_json block;
        block["variables"] = ev.variables;
        for (const auto& name : kMetricNames) {
            std::vector<double> vals;
            for (const auto& m : ev.per_variable) vals.push_back(m.get(name));
            block[name] = vals;
            block["global_" + name] = ev.global.get(name);
        }
        metrics[set_name] = block;
        std::cout << set_name << " global R2: " << ev.global.r2 << '\n';
    }
    std::ofstream mout(out_dir + "/metrics.json");
    mout << metrics.dump(2) << '\n';
    std::cout << "checkpoint: " << out_dir << "/model.ckpt (best epoch " << result.best_epoch
              << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string checkpoint, data, split, set_name = "test", out, dump_preds, dump_coords,
                scatter_dir;
};

int cmd_evaluate(const EvaluateArgs& a) {
    TrainedModel tm = load_trained(a.checkpoint);
    const SpectralLibrary lib = load_library(a.data);
    const SplitAssignment split = load_split(a.split);
    const PreparedData prepared = prepare_data(lib, split, tm.config);
    const PreparedSet& set = prepared.set(a.set_name);
    if (set.size() == 0) throw UsageError("set '" + a.set_name + "' is empty");

    const auto ev =
        evaluate_model(tm.model, set, tm.config, tm.scaler, tm.codecs, tm.variable_names);

    std::cout << "variable";
    for (const auto& m : kMetricNames) std::cout << '\t' << m;
    std::cout << '\n';
    for (std::size_t v = 0; v < ev.variables.size(); ++v) {
        std::cout << ev.variables[v];
        for (const auto& m : kMetricNames) std::cout << '\t' << ev.per_variable[v].get(m);
        std::cout << '\n';
    }
    std::cout << "global";
    for (const auto& m : kMetricNames) std::cout << '\t' << ev.global.get(m);
    std::cout << '\n';

    nlohmann::ordered_json out;
    out["set"] = a.set_name;
    out["variables"] = ev.variables;
    for (const auto& name : kMetricNames) {
        std::vector<double> vals;
        for (const auto& m : ev.per_variable) vals.push_back(m.get(name));
        out[name] = vals;
        out["global_" + name] = ev.global.get(name);
    }
    if (!a.out.empty()) {
        std::ofstream f(a.out);
        if (!f) throw std::runtime_error("cannot write file: " + a.out);
        f << out.dump(2) << '\n';
        nlohmann::ordered_json cfg;
        cfg["checkpoint"] = a.checkpoint;
        cfg["data"] = a.data;
        cfg["split"] = a.split;
        cfg["set"] = a.set_name;
        write_manifest(a.out + ".manifest.json", "evaluate", cfg);
    }

    if (!a.dump_preds.empty() || !a.scatter_dir.empty()) {
        const Tensor pred = predict_scaled(tm.model, set.x, tm.config, tm.scaler, tm.codecs);
        const auto idx = split.subset(a.set_name);
        if (!a.dump_preds.empty()) {
            std::ofstream f(a.dump_preds);
            if (!f) throw std::runtime_error("cannot write file: " + a.dump_preds);
            for (std::size_t v = 0; v < ev.variables.size(); ++v)
                f << (v ? "," : "") << ev.variables[v];
            f << '\n';
            std::vector<double> row(ev.variables.size());
            for (std::size_t i = 0; i < set.size(); ++i) {
                for (std::size_t v = 0; v < row.size(); ++v) row[v] = pred(i, v);
                const auto raw = invert_scaler(tm.scaler, row);
                for (std::size_t v = 0; v < raw.size(); ++v) f << (v ? "," : "") << raw[v];
                f << '\n';
            }
        }
        if (!a.dump_coords.empty()) {
            if (!lib.coords) throw UsageError("library has no lat/lon columns");
            std::ofstream f(a.dump_coords);
            if (!f) throw std::runtime_error("cannot write file: " + a.dump_coords);
            f << "lat,lon\n";
            for (std::size_t i : idx)
                f << (*lib.coords)(i, 0) << ',' << (*lib.coords)(i, 1) << '\n';
        }
        if (!a.scatter_dir.empty()) {
            fs::create_directories(a.scatter_dir);
            std::vector<double> p(set.size()), t(set.size());
            for (std::size_t v = 0; v < ev.variables.size(); ++v) {
                for (std::size_t i = 0; i < set.size(); ++i) {
                    p[i] = pred(i, v);
                    t[i] = (set.y_raw(i, v) - tm.scaler.mean[v]) / tm.scaler.std[v];
                }
                emit_scatter(p, t, a.scatter_dir + "/" + ev.variables[v] + ".csv");
            }
        }
    } else if (!a.dump_coords.empty()) {
        throw UsageError("--dump-coords requires --dump-preds");
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct GridArgs {
    std::string grid, data, split, out, checkpoint_dir;
    int workers = 1;
};

int cmd_grid_search(const GridArgs& a) {
    const GridDefinition grid = GridDefinition::from_file(a.grid);
    const SpectralLibrary lib = load_library(a.data);
    const SplitAssignment split = load_split(a.split);

    nlohmann::ordered_json cfg;
    cfg["grid"] = a.grid;
    cfg["data"] = a.data;
    cfg["split"] = a.split;
    cfg["out"] = a.out;
    cfg["workers"] = a.workers;
    cfg["grid_definition"] = grid.to_json();
    write_manifest(a.out + ".manifest.json", "grid-search", cfg);

    const auto runs = run_grid(grid, lib, split, a.out, a.workers, a.checkpoint_dir);
    std::size_t done = 0, failed = 0;
    for (const auto& [id, rec] : runs) {
        if (rec.status == "done") ++done;
        if (rec.status == "failed") ++failed;
    }
    std::cout << "grid: " << grid.total() << " setups, " << done << " done, " << failed
              << " failed (store: " << a.out << ")\n";
    return failed == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct SensitivityArgs {
    std::string runs, metric = "r2", set_name = "test", out_dir;
};

int cmd_sensitivity(const SensitivityArgs& a) {
    const auto contents = JobStore::load(a.runs);
    if (contents.runs.empty()) throw UsageError("no records in store: " + a.runs);
    if (contents.axes.empty())
        throw UsageError("store has no grid header; re-run grid-search to record axes");
    std::vector<RunRecord> done;
    for (const auto& [id, rec] : contents.runs)
        if (rec.status == "done") done.push_back(rec);
    if (done.empty()) throw UsageError("no done runs in store: " + a.runs);

    const auto tables = sensitivity_marginals(done, contents.axes, a.metric, a.set_name);
    fs::create_directories(a.out_dir);
    for (const auto& table : tables) {
        write_sensitivity_csv(table, a.out_dir + "/" + a.metric + "_" + table.parameter + ".csv");
        std::cout << format_sensitivity(table) << '\n';
    }

    nlohmann::ordered_json cfg;
    cfg["runs"] = a.runs;
    cfg["metric"] = a.metric;
    cfg["set"] = a.set_name;
    cfg["out_dir"] = a.out_dir;
    write_manifest(a.out_dir + "/manifest.json", "sensitivity", cfg);
    return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string data, sensor, out, dump_config;
};

int cmd_simulate_sensor(const SimulateArgs& a) {
    if (!a.dump_config.empty()) {
        save_sensor_config(default_prisma_config(), a.dump_config);
        std::cout << "wrote default sensor config (" << default_prisma_config().active_bands().size()
                  << " active bands) to " << a.dump_config << '\n';
        if (a.data.empty()) return 0;
    }
    if (a.data.empty() || a.out.empty())
        throw UsageError("simulate-sensor needs --data and --out (or --dump-config alone)");
    const SensorConfig cfg =
        a.sensor.empty() ? default_prisma_config() : load_sensor_config(a.sensor);
    const SpectralLibrary lib = load_library(a.data);
    const SpectralLibrary sim = simulate_sensor_library(lib, cfg);
    save_library(sim, a.out);

    nlohmann::ordered_json mcfg;
    mcfg["data"] = a.data;
    mcfg["sensor"] = a.sensor.empty() ? "default-prisma" : a.sensor;
    mcfg["out"] = a.out;
    write_manifest(a.out + ".manifest.json", "simulate-sensor", mcfg);
    std::cout << "simulated " << sim.n_samples() << " spectra onto " << sim.n_bands()
              << " bands\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct GradcamArgs {
    std::string checkpoint, data, split, set_name = "test", var, out;
    int block = -1;
};

int cmd_gradcam(const GradcamArgs& a) {
    TrainedModel tm = load_trained(a.checkpoint);
    const SpectralLibrary lib = load_library(a.data);
    const SplitAssignment split = load_split(a.split);
    const std::size_t var_index = lib.variable_index(a.var);
    const PreparedData prepared = prepare_data(lib, split, tm.config);
    const PreparedSet& set = prepared.set(a.set_name);
    if (set.size() == 0) throw UsageError("set '" + a.set_name + "' is empty");

    const auto curve =
        gradcam_average(tm.model, set.x, prepared.wavelengths, var_index, a.block);

    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot write file: " + a.out);
    out << "wavelength,weight\n";
    for (std::size_t i = 0; i < curve.wavelengths.size(); ++i)
        out << curve.wavelengths[i] << ',' << curve.weights[i] << '\n';

    nlohmann::ordered_json cfg;
    cfg["checkpoint"] = a.checkpoint;
    cfg["data"] = a.data;
    cfg["split"] = a.split;
    cfg["set"] = a.set_name;
    cfg["var"] = a.var;
    cfg["block"] = a.block;
    write_manifest(a.out + ".manifest.json", "gradcam", cfg);
    std::cout << "wrote importance curve (" << curve.wavelengths.size() << " points) to "
              << a.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct MapArgs {
    std::string pred, coords, out, var, bbox, range;
    std::string size = "256x256";
    double power = 2.0;
};

int cmd_map(const MapArgs& a) {
    const CsvTable preds = read_csv(a.pred);
    const CsvTable crd = read_csv(a.coords);
    if (preds.rows.size() != crd.rows.size())
        throw UsageError("pred and coords row counts differ");
    if (preds.rows.empty()) throw UsageError("no data rows in " + a.pred);

    std::size_t var_col = 0;
    if (!a.var.empty()) {
        auto it = std::find(preds.header.begin(), preds.header.end(), a.var);
        if (it == preds.header.end()) throw UsageError("variable not in pred file: " + a.var);
        var_col = static_cast<std::size_t>(it - preds.header.begin());
    }
    std::size_t lat_col = 0, lon_col = 1;
    for (std::size_t c = 0; c < crd.header.size(); ++c) {
        if (crd.header[c] == "lat") lat_col = c;
        if (crd.header[c] == "lon") lon_col = c;
    }

    std::vector<GeoPoint> points;
    for (std::size_t i = 0; i < preds.rows.size(); ++i) {
        const auto v = parse_double(preds.rows[i][var_col]);
        const auto la = parse_double(crd.rows[i][lat_col]);
        const auto lo = parse_double(crd.rows[i][lon_col]);
        if (!v || !la || !lo) throw UsageError("non-numeric row " + std::to_string(i + 1));
        points.push_back({*la, *lo, *v});
    }

    RasterSpec spec;
    if (!a.bbox.empty()) {
        std::istringstream is(a.bbox);
        char c = 0;
        if (!(is >> spec.lat_min >> c >> spec.lon_min >> c >> spec.lat_max >> c >> spec.lon_max))
            throw UsageError("bbox must be latmin,lonmin,latmax,lonmax");
    } else {
        spec.lat_min = spec.lat_max = points[0].lat;
        spec.lon_min = spec.lon_max = points[0].lon;
        for (const auto& p : points) {
            spec.lat_min = std::min(spec.lat_min, p.lat);
            spec.lat_max = std::max(spec.lat_max, p.lat);
            spec.lon_min = std::min(spec.lon_min, p.lon);
            spec.lon_max = std::max(spec.lon_max, p.lon);
        }
    }
    std::tie(spec.width, spec.height) = parse_size(a.size);
    spec.power = a.power;
    if (!a.range.empty()) {
        double lo = 0, hi = 0;
        char c = 0;
        std::istringstream is(a.range);
        if (!(is >> lo >> c >> hi) || c != ',') throw UsageError("range must be lo,hi");
        spec.value_range = {lo, hi};
    }

    const Tensor grid = idw_interpolate(points, spec);
    emit_raster(grid, spec, a.out);

    nlohmann::ordered_json cfg;
    cfg["pred"] = a.pred;
    cfg["coords"] = a.coords;
    cfg["var"] = a.var;
    cfg["bbox"] = a.bbox;
    cfg["size"] = a.size;
    cfg["power"] = a.power;
    cfg["out"] = a.out;
    write_manifest(a.out + ".manifest.json", "map", cfg);
    std::cout << "wrote " << spec.width << "x" << spec.height << " raster to " << a.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_summary(const std::string& spec_path) {
    std::ifstream in(spec_path);
    if (!in) throw UsageError("cannot open spec: " + spec_path);
    const NetSpec spec = NetSpec::from_json(nlohmann::json::parse(in));
    std::cout << summarize(spec);
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"soilspec - soil property estimation from spectral libraries", "soilspec"};
    app.require_subcommand(1);

    SplitArgs split_args;
    auto* sc_split = app.add_subcommand("split", "Quantile-stratified train/val/test split");
    sc_split->add_option("--data", split_args.data, "input library CSV")->required();
    sc_split->add_option("--out", split_args.out, "output split JSON")->required();
    sc_split->add_option("--fractions", split_args.fractions, "train,val,test fractions");
    sc_split->add_option("--seed", split_args.seed, "shuffle seed");
    sc_split->add_option("--bins", split_args.bins, "stratification quantile bins");
    sc_split->add_option("--audit", split_args.audit_out, "write the quantile audit table here");

    TrainArgs train_args;
    auto* sc_train = app.add_subcommand("train", "Train one model");
    sc_train->add_option("--config", train_args.config_path, "engine config JSON");
    sc_train->add_option("--data", train_args.data, "input library CSV");
    sc_train->add_option("--split", train_args.split, "split JSON");
    sc_train->add_option("--out", train_args.out_dir, "output directory");
    sc_train->add_option("--sensor", train_args.sensor, "sensor config applied before training");
    train_args.o_epochs = sc_train->add_option("--epochs", train_args.overrides.epochs);
    train_args.o_seed = sc_train->add_option("--seed", train_args.overrides.seed);
    train_args.o_lr = sc_train->add_option("--lr", train_args.overrides.lr);
    train_args.o_batch = sc_train->add_option("--batch-size", train_args.overrides.batch_size);
    train_args.o_fmin = sc_train->add_option("--f-min", train_args.overrides.f_min);
    train_args.o_fmax = sc_train->add_option("--f-max", train_args.overrides.f_max);
    train_args.o_finsz = sc_train->add_option("--f-insz", train_args.overrides.f_insz);
    train_args.o_leak = sc_train->add_option("--leak", train_args.overrides.leak);
    train_args.o_wd = sc_train->add_option("--weight-decay", train_args.overrides.weight_decay);
    train_args.o_pmin = sc_train->add_option("--p-min", train_args.overrides.p_min);
    train_args.o_pmax = sc_train->add_option("--p-max", train_args.overrides.p_max);
    train_args.o_nout = sc_train->add_option("--n-out", train_args.overrides.n_out);
    train_args.o_hidden = sc_train->add_option("--proj-hidden", train_args.overrides.proj_hidden);
    train_args.o_refine = sc_train->add_option("--n-refine", train_args.overrides.n_refine);
    train_args.o_bins = sc_train->add_option("--n-bins", train_args.overrides.n_bins);
    sc_train->add_option("--loss", train_args.loss, "l1 | l2 | hybrid");
    sc_train->add_option("--norm", train_args.norm, "on | off")
        ->check(CLI::IsMember({"on", "off"}));

    EvaluateArgs eval_args;
    auto* sc_eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on a split");
    sc_eval->add_option("--checkpoint", eval_args.checkpoint)->required();
    sc_eval->add_option("--data", eval_args.data)->required();
    sc_eval->add_option("--split", eval_args.split)->required();
    sc_eval->add_option("--set", eval_args.set_name, "train | val | test");
    sc_eval->add_option("--out", eval_args.out, "metrics JSON path");
    sc_eval->add_option("--dump-preds", eval_args.dump_preds, "write raw predictions CSV");
    sc_eval->add_option("--dump-coords", eval_args.dump_coords, "write matching lat,lon CSV");
    sc_eval->add_option("--scatter", eval_args.scatter_dir, "write per-variable scatter CSVs");

    GridArgs grid_args;
    auto* sc_grid = app.add_subcommand("grid-search", "Run a training grid with resume");
    sc_grid->add_option("--grid", grid_args.grid)->required();
    sc_grid->add_option("--data", grid_args.data)->required();
    sc_grid->add_option("--split", grid_args.split)->required();
    sc_grid->add_option("--out", grid_args.out, "JSONL job store")->required();
    sc_grid->add_option("--workers", grid_args.workers);
    sc_grid->add_option("--checkpoint-dir", grid_args.checkpoint_dir);

    SensitivityArgs sens_args;
    auto* sc_sens = app.add_subcommand("sensitivity", "Per-parameter marginal metric tables");
    sc_sens->add_option("--runs", sens_args.runs)->required();
    sc_sens->add_option("--metric", sens_args.metric, "mae | mse | rmse | r2 | pearson");
    sc_sens->add_option("--set", sens_args.set_name, "val | test");
    sc_sens->add_option("--out", sens_args.out_dir, "output directory")->required();

    SimulateArgs sim_args;
    auto* sc_sim = app.add_subcommand("simulate-sensor", "Resample a library through a sensor");
    sc_sim->add_option("--data", sim_args.data);
    sc_sim->add_option("--sensor", sim_args.sensor, "sensor config JSON (default: PRISMA-like)");
    sc_sim->add_option("--out", sim_args.out);
    sc_sim->add_option("--dump-config", sim_args.dump_config, "write the default sensor config");

    GradcamArgs cam_args;
    auto* sc_cam = app.add_subcommand("gradcam", "Average spectral importance on a split");
    sc_cam->add_option("--checkpoint", cam_args.checkpoint)->required();
    sc_cam->add_option("--data", cam_args.data)->required();
    sc_cam->add_option("--split", cam_args.split)->required();
    sc_cam->add_option("--set", cam_args.set_name);
    sc_cam->add_option("--var", cam_args.var, "target variable name")->required();
    sc_cam->add_option("--block", cam_args.block, "probe block (-1 = last)");
    sc_cam->add_option("--out", cam_args.out, "curve CSV")->required();

    MapArgs map_args;
    auto* sc_map = app.add_subcommand("map", "IDW raster of predictions");
    sc_map->add_option("--pred", map_args.pred)->required();
    sc_map->add_option("--coords", map_args.coords)->required();
    sc_map->add_option("--bbox", map_args.bbox, "latmin,lonmin,latmax,lonmax");
    sc_map->add_option("--size", map_args.size, "WxH pixels");
    sc_map->add_option("--var", map_args.var, "column of --pred to rasterize");
    sc_map->add_option("--power", map_args.power, "IDW exponent");
    sc_map->add_option("--range", map_args.range, "fixed color range lo,hi");
    sc_map->add_option("--out", map_args.out, "output PGM")->required();

    std::string summary_spec;
    auto* sc_summary = app.add_subcommand("summary", "Print the architecture table of a spec");
    sc_summary->add_option("--spec", summary_spec, "network spec JSON")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        if (sc_split->parsed()) return cmd_split(split_args);
        if (sc_train->parsed()) return cmd_train(train_args);
        if (sc_eval->parsed()) return cmd_evaluate(eval_args);
        if (sc_grid->parsed()) return cmd_grid_search(grid_args);
        if (sc_sens->parsed()) return cmd_sensitivity(sens_args);
        if (sc_sim->parsed()) return cmd_simulate_sensor(sim_args);
        if (sc_cam->parsed()) return cmd_gradcam(cam_args);
        if (sc_map->parsed()) return cmd_map(map_args);
        if (sc_summary->parsed()) return cmd_summary(summary_spec);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

int dispatch(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args);
}

}  // namespace soilspec::cli
