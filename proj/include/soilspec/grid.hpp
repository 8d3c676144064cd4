#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "soilspec/train.hpp"

namespace soilspec {

/// A grid axis: a TrainConfig field name and the values it sweeps.
struct GridAxis {
    std::string field;
    std::vector<nlohmann::json> values;
};

/// Grid file layout: {"base": {TrainConfig fields}, "axes": {"field": [...]}}.
/// Axes enumerate in file order, last axis fastest.
struct GridDefinition {
    TrainConfig base;
    std::vector<GridAxis> axes;

    static GridDefinition from_json(const nlohmann::json& j);
    static GridDefinition from_file(const std::string& path);
    nlohmann::ordered_json to_json() const;

    std::size_t total() const;
};

void set_config_field(TrainConfig& cfg, const std::string& field, const nlohmann::json& value);
nlohmann::json get_config_field(const TrainConfig& cfg, const std::string& field);

/// Full cartesian product in deterministic lexicographic order.
std::vector<TrainConfig> enumerate_grid(const GridDefinition& grid);

/// Content-derived stable identifier of one grid cell.
std::string run_id_for(const TrainConfig& cfg);

struct RunRecord {
    std::string run_id;
    std::string status;  // pending | running | done | failed
    TrainConfig config;
    std::vector<std::string> variables;
    // metric name -> per-variable values, on val and test splits
    std::map<std::string, std::vector<double>> val_metrics, test_metrics;
    double wall_time_s = 0.0;
    std::string checkpoint;
    int failed_epoch = -1;
    std::string error;

    nlohmann::ordered_json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
};

/// Append-only JSON-lines store, one record per state transition,
/// last-writer-wins per run id. Appends are mutex-serialized and flushed.
class JobStore {
public:
    explicit JobStore(std::string path);

    void append(const RunRecord& rec);
    void append_grid_header(const GridDefinition& grid);

    struct Contents {
        std::map<std::string, RunRecord> runs;  // folded, last state wins
        std::vector<GridAxis> axes;             // from the header, if present
    };
    static Contents load(const std::string& path);

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::mutex mutex_;
};

/// Runs every grid cell not already done in the store; each run trains with a
/// seed derived from its run id, evaluates val and test, and appends records
/// atomically. Resume never re-trains a done record.
std::map<std::string, RunRecord> run_grid(const GridDefinition& grid, const SpectralLibrary& lib,
                                          const SplitAssignment& split, const std::string& store_path,
                                          int workers, const std::string& checkpoint_dir = "");

struct SensitivityTable {
    std::string parameter;
    std::vector<std::string> values;          // row labels
    std::vector<std::string> columns;         // variable names + "global"
    std::vector<std::vector<double>> cells;   // [row][column]
    std::vector<std::size_t> counts;          // done runs per row
};

/// Per-axis marginal means of one metric over all done runs sharing each axis
/// value, per variable plus a global column.
std::vector<SensitivityTable> sensitivity_marginals(const std::vector<RunRecord>& done,
                                                    const std::vector<GridAxis>& axes,
                                                    const std::string& metric,
                                                    const std::string& set_name = "test");

std::string format_sensitivity(const SensitivityTable& table);
void write_sensitivity_csv(const SensitivityTable& table, const std::string& path);

}  // namespace soilspec
