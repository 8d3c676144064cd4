#include "soilspec/grid.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "soilspec/rng.hpp"

namespace soilspec {

GridDefinition GridDefinition::from_json(const nlohmann::json& j) {
    GridDefinition g;
    if (j.contains("base")) g.base = TrainConfig::from_json(j["base"]);
    if (j.contains("axes")) {
        for (const auto& [field, values] : j["axes"].items()) {
            if (!values.is_array() || values.empty())
                throw std::invalid_argument("grid axis " + field + " must be a non-empty array");
            GridAxis axis;
            axis.field = field;
            for (const auto& v : values) axis.values.push_back(v);
            g.axes.push_back(std::move(axis));
        }
    }
    return g;
}

GridDefinition GridDefinition::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open grid file: " + path);
    return from_json(nlohmann::ordered_json::parse(in));
}

nlohmann::ordered_json GridDefinition::to_json() const {
    nlohmann::ordered_json j;
    j["base"] = base.to_json();
    j["axes"] = nlohmann::ordered_json::object();
    for (const auto& axis : axes) j["axes"][axis.field] = axis.values;
    return j;
}

std::size_t GridDefinition::total() const {
    std::size_t n = 1;
    for (const auto& axis : axes) n *= axis.values.size();
    return n;
}

void set_config_field(TrainConfig& cfg, const std::string& field, const nlohmann::json& value) {
    if (field == "f_min") cfg.f_min = value.get<double>();
    else if (field == "f_max") cfg.f_max = value.get<double>();
    else if (field == "f_insz") cfg.f_insz = value.get<std::size_t>();
    else if (field == "leak") cfg.leak = value.get<double>();
    else if (field == "use_norm") cfg.use_norm = value.get<bool>();
    else if (field == "lr") cfg.lr = value.get<double>();
    else if (field == "loss") cfg.loss = loss_kind_from_string(value.get<std::string>());
    else if (field == "epochs") cfg.epochs = value.get<int>();
    else if (field == "batch_size") cfg.batch_size = value.get<std::size_t>();
    else if (field == "weight_decay") cfg.weight_decay = value.get<double>();
    else if (field == "seed") cfg.seed = value.get<std::uint64_t>();
    else if (field == "p_min") cfg.p_min = value.get<int>();
    else if (field == "p_max") cfg.p_max = value.get<int>();
    else if (field == "n_out") cfg.n_out = value.get<std::size_t>();
    else if (field == "proj_hidden") cfg.proj_hidden = value.get<std::size_t>();
    else if (field == "n_refine") cfg.n_refine = value.get<int>();
    else if (field == "n_bins") cfg.n_bins = value.get<int>();
    else if (field == "hybrid_lambda") cfg.hybrid_lambda = value.get<double>();
    else throw std::invalid_argument("unknown grid axis field: " + field);
}

nlohmann::json get_config_field(const TrainConfig& cfg, const std::string& field) {
    const auto j = cfg.to_json();
    if (!j.contains(field)) throw std::invalid_argument("unknown config field: " + field);
    return j.at(field);
}

std::vector<TrainConfig> enumerate_grid(const GridDefinition& grid) {
    for (const auto& axis : grid.axes)
        if (axis.values.empty())
            throw std::invalid_argument("grid axis " + axis.field + " is empty");

    std::vector<TrainConfig> out;
    out.reserve(grid.total());
    std::vector<std::size_t> cursor(grid.axes.size(), 0);
    while (true) {
        TrainConfig cfg = grid.base;
        for (std::size_t a = 0; a < grid.axes.size(); ++a)
            set_config_field(cfg, grid.axes[a].field, grid.axes[a].values[cursor[a]]);
        cfg.validate();
        out.push_back(cfg);
        // Advance the odometer, last axis fastest.
        std::size_t a = grid.axes.size();
        while (a-- > 0) {
            if (++cursor[a] < grid.axes[a].values.size()) break;
            cursor[a] = 0;
            if (a == 0) return out;
        }
        if (grid.axes.empty()) return out;
    }
}

std::string run_id_for(const TrainConfig& cfg) {
    const std::uint64_t h = fnv1a(cfg.to_json().dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

nlohmann::ordered_json RunRecord::to_json() const {
    nlohmann::ordered_json j;
    j["type"] = "run";
    j["run_id"] = run_id;
    j["status"] = status;
    j["config"] = config.to_json();
    j["variables"] = variables;
    j["val"] = val_metrics;
    j["test"] = test_metrics;
    j["wall_time_s"] = wall_time_s;
    j["checkpoint"] = checkpoint;
    j["failed_epoch"] = failed_epoch;
    j["error"] = error;
    return j;
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.status = j.at("status").get<std::string>();
    r.config = TrainConfig::from_json(j.at("config"));
    r.variables = j.value("variables", std::vector<std::string>{});
    if (j.contains("val"))
        r.val_metrics = j["val"].get<std::map<std::string, std::vector<double>>>();
    if (j.contains("test"))
        r.test_metrics = j["test"].get<std::map<std::string, std::vector<double>>>();
    r.wall_time_s = j.value("wall_time_s", 0.0);
    r.checkpoint = j.value("checkpoint", std::string{});
    r.failed_epoch = j.value("failed_epoch", -1);
    r.error = j.value("error", std::string{});
    return r;
}

JobStore::JobStore(std::string path) : path_(std::move(path)) {}

void JobStore::append(const RunRecord& rec) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to job store: " + path_);
    out << rec.to_json().dump() << '\n';
    out.flush();
    if (!out) throw std::runtime_error("job store write failed: " + path_);
}

void JobStore::append_grid_header(const GridDefinition& grid) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to job store: " + path_);
    nlohmann::ordered_json j;
    j["type"] = "grid";
    j["grid"] = grid.to_json();
    out << j.dump() << '\n';
    out.flush();
}

JobStore::Contents JobStore::load(const std::string& path) {
    Contents contents;
    std::ifstream in(path);
    if (!in) return contents;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            continue;  // torn final line after a crash
        }
        const std::string type = j.value("type", "run");
        if (type == "grid") {
            const auto g = GridDefinition::from_json(j.at("grid"));
            contents.axes = g.axes;
        } else {
            RunRecord r = RunRecord::from_json(j);
            contents.runs[r.run_id] = std::move(r);
        }
    }
    return contents;
}

std::map<std::string, RunRecord> run_grid(const GridDefinition& grid, const SpectralLibrary& lib,
                                          const SplitAssignment& split,
                                          const std::string& store_path, int workers,
                                          const std::string& checkpoint_dir) {
    if (workers < 1) throw std::invalid_argument("run_grid: workers must be >= 1");
    const auto configs = enumerate_grid(grid);
    auto existing = JobStore::load(store_path);

    JobStore store(store_path);
    if (existing.axes.empty()) store.append_grid_header(grid);

    struct Job {
        TrainConfig config;
        std::string run_id;
    };
    std::vector<Job> todo;
    for (const auto& cfg : configs) {
        const std::string id = run_id_for(cfg);
        auto it = existing.runs.find(id);
        if (it != existing.runs.end() && it->second.status == "done") continue;
        todo.push_back({cfg, id});
    }

    if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);

    std::atomic<std::size_t> next{0};
    auto worker_fn = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            const Job& job = todo[i];

            RunRecord rec;
            rec.run_id = job.run_id;
            rec.config = job.config;
            // Per-run seed derived from the run id so results are independent
            // of worker scheduling.
            rec.config.seed = job.config.seed ^ fnv1a(job.run_id);
            rec.status = "running";
            store.append(rec);

            const auto t0 = std::chrono::steady_clock::now();
            try {
                TrainResult tr;
                TrainedModel tm = run_training(lib, split, rec.config, &tr);
                PreparedData data = prepare_data(lib, split, rec.config);

                rec.variables = tm.variable_names;
                for (const std::string set_name : {"val", "test"}) {
                    const auto& set = data.set(set_name);
                    if (set.size() == 0) continue;
                    const auto ev = evaluate_model(tm.model, set, rec.config, tm.scaler,
                                                   tm.codecs, tm.variable_names);
                    auto& dst = set_name == std::string("val") ? rec.val_metrics
                                                               : rec.test_metrics;
                    for (const auto& metric : kMetricNames) {
                        std::vector<double> per_var;
                        for (const auto& m : ev.per_variable) per_var.push_back(m.get(metric));
                        dst[metric] = std::move(per_var);
                    }
                }
                if (!checkpoint_dir.empty()) {
                    rec.checkpoint = checkpoint_dir + "/" + job.run_id + ".ckpt";
                    save_trained(tm, rec.checkpoint);
                }
                rec.status = "done";
            } catch (const TrainingDiverged& e) {
                rec.status = "failed";
                rec.failed_epoch = e.epoch;
                rec.error = e.what();
            } catch (const std::exception& e) {
                rec.status = "failed";
                rec.error = e.what();
            }
            rec.wall_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            store.append(rec);
        }
    };

    if (workers == 1) {
        worker_fn();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn);
        for (auto& t : pool) t.join();
    }
    return JobStore::load(store_path).runs;
}

std::vector<SensitivityTable> sensitivity_marginals(const std::vector<RunRecord>& done,
                                                    const std::vector<GridAxis>& axes,
                                                    const std::string& metric,
                                                    const std::string& set_name) {
    if (done.empty()) throw std::invalid_argument("sensitivity_marginals: no done runs");
    for (const auto& r : done)
        if (r.status != "done")
            throw std::invalid_argument("sensitivity_marginals: record " + r.run_id +
                                        " is not done");

    const std::vector<std::string>& variables = done.front().variables;
    std::vector<SensitivityTable> tables;

    for (const auto& axis : axes) {
        SensitivityTable table;
        table.parameter = axis.field;
        table.columns = variables;
        table.columns.push_back("global");

        for (const auto& value : axis.values) {
            std::vector<double> acc(variables.size(), 0.0);
            std::size_t count = 0;
            for (const auto& rec : done) {
                if (get_config_field(rec.config, axis.field) != value) continue;
                const auto& metrics =
                    set_name == "val" ? rec.val_metrics : rec.test_metrics;
                auto it = metrics.find(metric);
                if (it == metrics.end())
                    throw std::invalid_argument("sensitivity_marginals: record " + rec.run_id +
                                                " lacks metric " + metric);
                for (std::size_t v = 0; v < variables.size(); ++v) acc[v] += it->second[v];
                ++count;
            }
            if (count == 0)
                throw std::invalid_argument("sensitivity_marginals: axis " + axis.field +
                                            " value " + value.dump() + " has no done runs");
            std::vector<double> row(variables.size() + 1, 0.0);
            double global = 0.0;
            for (std::size_t v = 0; v < variables.size(); ++v) {
                row[v] = acc[v] / static_cast<double>(count);
                global += row[v];
            }
            row.back() = global / static_cast<double>(variables.size());
            table.values.push_back(value.dump());
            table.cells.push_back(std::move(row));
            table.counts.push_back(count);
        }
        tables.push_back(std::move(table));
    }
    return tables;
}

std::string format_sensitivity(const SensitivityTable& table) {
    std::ostringstream os;
    os << table.parameter;
    for (const auto& c : table.columns) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), " %9s", c.substr(0, 9).c_str());
        os << buf;
    }
    os << '\n';
    for (std::size_t r = 0; r < table.values.size(); ++r) {
        char head[32];
        std::snprintf(head, sizeof(head), "%-*s", static_cast<int>(table.parameter.size()),
                      table.values[r].c_str());
        os << head;
        for (double v : table.cells[r]) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), " %9.4f", v);
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

void write_sensitivity_csv(const SensitivityTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "value";
    for (const auto& c : table.columns) out << ',' << c;
    out << ",runs\n";
    for (std::size_t r = 0; r < table.values.size(); ++r) {
        out << table.values[r];
        for (double v : table.cells[r]) out << ',' << v;
        out << ',' << table.counts[r] << '\n';
    }
}

}  // namespace soilspec
