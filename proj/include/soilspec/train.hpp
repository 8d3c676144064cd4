#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "soilspec/arch.hpp"
#include "soilspec/data.hpp"
#include "soilspec/losses.hpp"
#include "soilspec/metrics.hpp"
#include "soilspec/nn.hpp"
#include "soilspec/resample.hpp"

namespace soilspec {

/// One training setup: spectral window and resolution, architecture knobs,
/// optimizer settings and loss choice.
struct TrainConfig {
    double f_min = 400.0;
    double f_max = 2500.0;
    std::size_t f_insz = 1024;
    double leak = 0.2;
    bool use_norm = true;
    double lr = 1e-4;
    LossKind loss = LossKind::L1;
    int epochs = 100;
    std::size_t batch_size = 64;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    int p_min = 4;
    int p_max = 7;
    std::size_t n_out = 4;
    std::size_t proj_hidden = 70;
    int n_refine = 1;
    int n_bins = 10;            // hybrid-loss quantile bins
    double hybrid_lambda = 1.0; // weight of the regression term

    void validate() const;
    NetSpec net_spec(std::size_t n_vars) const;
    CropResampleSpec crop_resample() const { return {f_min, f_max, f_insz}; }
    nlohmann::ordered_json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct PreparedSet {
    Tensor x;      // [n, f_insz], standardized model inputs
    Tensor y_raw;  // [n, n_vars], targets in original units
    std::size_t size() const { return x.rank() == 2 ? x.dim(0) : 0; }
};

struct PreparedData {
    std::vector<double> wavelengths;  // model-input grid after crop + resample
    PreparedSet train, val, test;
    std::vector<std::string> variable_names;

    const PreparedSet& set(const std::string& name) const;
};

/// Crop to [f_min, f_max], resample to f_insz and standardize each spectrum.
std::vector<double> prepare_spectrum(std::span<const double> spectrum,
                                     std::span<const double> wavelengths,
                                     const TrainConfig& cfg);

PreparedData prepare_data(const SpectralLibrary& lib, const SplitAssignment& split,
                          const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_r2 = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_val_r2 = 0.0;
};

/// Thrown when the training loss turns non-finite; carries the epoch index.
struct TrainingDiverged : std::runtime_error {
    int epoch;
    explicit TrainingDiverged(int e)
        : std::runtime_error("training diverged at epoch " + std::to_string(e)), epoch(e) {}
};

/// Minibatch training with AdamW. Retains the parameters of the epoch with
/// the best validation global R2 (falls back to the final epoch when there is
/// no validation set). Deterministic for a fixed config seed.
TrainResult train(nn::Model& model, const PreparedData& data, const TrainConfig& cfg,
                  const TargetScaler& scaler, const std::vector<QuantileCodec>& codecs);

/// A trained model plus everything needed to run it on new spectra.
struct TrainedModel {
    nn::Model model;
    TrainConfig config;
    TargetScaler scaler;
    std::vector<QuantileCodec> codecs;  // per variable; empty unless hybrid loss
    std::vector<std::string> variable_names;
    std::vector<double> input_wavelengths;
};

/// Fits the target scaler (and codecs for the hybrid loss) on the training
/// split, builds the network from the config and trains it.
TrainedModel run_training(const SpectralLibrary& lib, const SplitAssignment& split,
                          const TrainConfig& cfg, TrainResult* result = nullptr);

/// Predictions on the standardized target scale, [n, n_vars]. Hybrid heads
/// are decoded through the codec and then standardized.
Tensor predict_scaled(nn::Model& model, const Tensor& x, const TrainConfig& cfg,
                      const TargetScaler& scaler, const std::vector<QuantileCodec>& codecs);

struct Evaluation {
    std::vector<std::string> variables;
    std::vector<MetricSet> per_variable;  // on standardized targets
    MetricSet global;                     // arithmetic mean over variables
};

Evaluation evaluate_model(nn::Model& model, const PreparedSet& set, const TrainConfig& cfg,
                          const TargetScaler& scaler, const std::vector<QuantileCodec>& codecs,
                          const std::vector<std::string>& variable_names);

void save_trained(const TrainedModel& tm, const std::string& path);
TrainedModel load_trained(const std::string& path);

}  // namespace soilspec
