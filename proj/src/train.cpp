#include "soilspec/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "soilspec/resample.hpp"
#include "soilspec/rng.hpp"

namespace soilspec {

void TrainConfig::validate() const {
    if (!(f_min < f_max)) throw std::invalid_argument("TrainConfig: f_min must be < f_max");
    if (!is_power_of_two(f_insz))
        throw std::invalid_argument("TrainConfig: f_insz must be a power of 2");
    if (leak < 0.0 || leak >= 1.0)
        throw std::invalid_argument("TrainConfig: leak must be in [0, 1)");
    if (!(lr > 0.0) && lr != 0.0) throw std::invalid_argument("TrainConfig: bad learning rate");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (n_bins < 2) throw std::invalid_argument("TrainConfig: n_bins must be >= 2");
}

NetSpec TrainConfig::net_spec(std::size_t n_vars) const {
    NetSpec s;
    s.n_in = f_insz;
    s.n_out = n_out;
    s.p_min = p_min;
    s.p_max = p_max;
    s.n_refine = n_refine;
    s.use_norm = use_norm;
    s.leak = leak;
    s.proj_hidden = proj_hidden;
    s.n_vars = n_vars;
    return s;
}

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["f_min"] = f_min;
    j["f_max"] = f_max;
    j["f_insz"] = f_insz;
    j["leak"] = leak;
    j["use_norm"] = use_norm;
    j["lr"] = lr;
    j["loss"] = to_string(loss);
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["weight_decay"] = weight_decay;
    j["seed"] = seed;
    j["p_min"] = p_min;
    j["p_max"] = p_max;
    j["n_out"] = n_out;
    j["proj_hidden"] = proj_hidden;
    j["n_refine"] = n_refine;
    j["n_bins"] = n_bins;
    j["hybrid_lambda"] = hybrid_lambda;
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.f_min = j.value("f_min", c.f_min);
    c.f_max = j.value("f_max", c.f_max);
    c.f_insz = j.value("f_insz", c.f_insz);
    c.leak = j.value("leak", c.leak);
    c.use_norm = j.value("use_norm", c.use_norm);
    c.lr = j.value("lr", c.lr);
    if (j.contains("loss")) c.loss = loss_kind_from_string(j["loss"].get<std::string>());
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.p_min = j.value("p_min", c.p_min);
    c.p_max = j.value("p_max", c.p_max);
    c.n_out = j.value("n_out", c.n_out);
    c.proj_hidden = j.value("proj_hidden", c.proj_hidden);
    c.n_refine = j.value("n_refine", c.n_refine);
    c.n_bins = j.value("n_bins", c.n_bins);
    c.hybrid_lambda = j.value("hybrid_lambda", c.hybrid_lambda);
    c.validate();
    return c;
}

const PreparedSet& PreparedData::set(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("unknown set: " + name);
}

std::vector<double> prepare_spectrum(std::span<const double> spectrum,
                                     std::span<const double> wavelengths,
                                     const TrainConfig& cfg) {
    const CropResampleSpec cr = cfg.crop_resample();
    auto [lo, hi] = crop_range(wavelengths, cr.f_min, cr.f_max);
    auto resampled = resample_linear(spectrum.subspan(lo, hi - lo + 1), cr.f_insz);
    standardize_spectrum_inplace(resampled);
    return resampled;
}

namespace {

PreparedSet prepare_subset(const SpectralLibrary& lib, std::span<const std::size_t> idx,
                           std::size_t lo, std::size_t hi, const TrainConfig& cfg) {
    PreparedSet set;
    set.x = Tensor({idx.size(), cfg.f_insz});
    set.y_raw = Tensor({idx.size(), lib.n_vars()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto resampled = resample_linear(lib.spectrum(idx[i]).subspan(lo, hi - lo + 1), cfg.f_insz);
        standardize_spectrum_inplace(resampled);
        std::copy(resampled.begin(), resampled.end(), set.x.data() + i * cfg.f_insz);
        for (std::size_t v = 0; v < lib.n_vars(); ++v) set.y_raw(i, v) = lib.targets(idx[i], v);
    }
    return set;
}

Tensor gather_batch(const Tensor& x, std::span<const std::size_t> rows) {
    const std::size_t L = x.dim(1);
    Tensor out({rows.size(), 1, L});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(x.data() + rows[i] * L, x.data() + (rows[i] + 1) * L, out.data() + i * L);
    return out;
}

/// Per-variable head layout of the hybrid loss output: bins_v logits then one
/// offset scalar, concatenated over variables.
struct HybridLayout {
    std::vector<std::size_t> offsets;  // start of each variable's slice
    std::vector<int> bins;
    std::size_t width = 0;

    explicit HybridLayout(const std::vector<QuantileCodec>& codecs) {
        for (const auto& c : codecs) {
            offsets.push_back(width);
            bins.push_back(c.n_bins());
            width += static_cast<std::size_t>(c.n_bins()) + 1;
        }
    }
};

}  // namespace

PreparedData prepare_data(const SpectralLibrary& lib, const SplitAssignment& split,
                          const TrainConfig& cfg) {
    cfg.validate();
    auto [lo, hi] = crop_range(lib.wavelengths, cfg.f_min, cfg.f_max);
    PreparedData data;
    data.wavelengths = resample_linear(
        std::span<const double>(lib.wavelengths).subspan(lo, hi - lo + 1), cfg.f_insz);
    data.variable_names = lib.variable_names;
    data.train = prepare_subset(lib, split.train, lo, hi, cfg);
    data.val = prepare_subset(lib, split.val, lo, hi, cfg);
    data.test = prepare_subset(lib, split.test, lo, hi, cfg);
    return data;
}

Tensor predict_scaled(nn::Model& model, const Tensor& x, const TrainConfig& cfg,
                      const TargetScaler& scaler, const std::vector<QuantileCodec>& codecs) {
    const std::size_t n = x.dim(0);
    const std::size_t n_vars = scaler.mean.size();
    Tensor pred({n, n_vars});
    const bool hybrid = cfg.loss == LossKind::Hybrid;
    HybridLayout layout(codecs);

    std::vector<double> raw(n_vars);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
        const std::size_t count = std::min(cfg.batch_size, n - start);
        std::vector<std::size_t> rows(count);
        for (std::size_t i = 0; i < count; ++i) rows[i] = start + i;
        const Tensor out = model.forward(gather_batch(x, rows), false);
        for (std::size_t i = 0; i < count; ++i) {
            if (!hybrid) {
                for (std::size_t v = 0; v < n_vars; ++v) pred(start + i, v) = out(i, v);
            } else {
                for (std::size_t v = 0; v < n_vars; ++v) {
                    const std::size_t off = layout.offsets[v];
                    const int bins = layout.bins[v];
                    std::span<const double> logits(out.data() + i * layout.width + off,
                                                   static_cast<std::size_t>(bins));
                    const double r = out(i, off + static_cast<std::size_t>(bins));
                    raw[v] = hybrid_decode(logits, r, codecs[v]);
                }
                const auto scaled = apply_scaler(scaler, raw);
                for (std::size_t v = 0; v < n_vars; ++v) pred(start + i, v) = scaled[v];
            }
        }
    }
    return pred;
}

Evaluation evaluate_model(nn::Model& model, const PreparedSet& set, const TrainConfig& cfg,
                          const TargetScaler& scaler, const std::vector<QuantileCodec>& codecs,
                          const std::vector<std::string>& variable_names) {
    if (set.size() == 0) throw std::invalid_argument("evaluate_model: empty set");
    const Tensor pred = predict_scaled(model, set.x, cfg, scaler, codecs);
    const std::size_t n = set.size(), n_vars = variable_names.size();

    Evaluation ev;
    ev.variables = variable_names;
    std::vector<double> p(n), t(n);
    for (std::size_t v = 0; v < n_vars; ++v) {
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = pred(i, v);
            t[i] = (set.y_raw(i, v) - scaler.mean[v]) / scaler.std[v];
        }
        ev.per_variable.push_back(compute_metrics(p, t));
    }
    for (const auto& m : ev.per_variable) {
        ev.global.mae += m.mae;
        ev.global.mse += m.mse;
        ev.global.rmse += m.rmse;
        ev.global.r2 += m.r2;
        ev.global.pearson += m.pearson;
    }
    const double nv = static_cast<double>(n_vars);
    ev.global.mae /= nv;
    ev.global.mse /= nv;
    ev.global.rmse /= nv;
    ev.global.r2 /= nv;
    ev.global.pearson /= nv;
    return ev;
}

TrainResult train(nn::Model& model, const PreparedData& data, const TrainConfig& cfg,
                  const TargetScaler& scaler, const std::vector<QuantileCodec>& codecs) {
    cfg.validate();
    const std::size_t n_train = data.train.size();
    const std::size_t n_vars = data.variable_names.size();
    if (n_train == 0) throw std::invalid_argument("train: empty training set");
    const bool hybrid = cfg.loss == LossKind::Hybrid;
    HybridLayout layout(codecs);

    // Standardized targets and hybrid encodings, fixed for the whole run.
    Tensor y_scaled({n_train, n_vars});
    std::vector<HybridTarget> y_hybrid(hybrid ? n_train * n_vars : 0);
    for (std::size_t i = 0; i < n_train; ++i)
        for (std::size_t v = 0; v < n_vars; ++v) {
            y_scaled(i, v) = (data.train.y_raw(i, v) - scaler.mean[v]) / scaler.std[v];
            if (hybrid) y_hybrid[i * n_vars + v] = codecs[v].encode(data.train.y_raw(i, v));
        }

    auto params = model.parameters();
    nn::AdamW opt(cfg.lr, cfg.weight_decay);
    Rng shuffle_rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);

    std::vector<std::size_t> perm(n_train);
    for (std::size_t i = 0; i < n_train; ++i) perm[i] = i;

    TrainResult result;
    std::vector<double> best_state;
    double best_val = -std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(perm);
        double loss_sum = 0.0;
        std::size_t n_batches = 0;

        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n_train - start);
            // A trailing singleton batch has no train-mode batch statistics.
            if (count == 1 && cfg.use_norm && n_train > 1) continue;
            std::span<const std::size_t> rows(perm.data() + start, count);
            const Tensor xb = gather_batch(data.train.x, rows);
            const Tensor out = model.forward(xb, true);

            double batch_loss = 0.0;
            Tensor grad(out.shape());
            if (!hybrid) {
                Tensor yb({count, n_vars});
                for (std::size_t i = 0; i < count; ++i)
                    for (std::size_t v = 0; v < n_vars; ++v) yb(i, v) = y_scaled(rows[i], v);
                const LossValue lv = cfg.loss == LossKind::L1 ? l1_loss(out, yb) : l2_loss(out, yb);
                batch_loss = lv.value;
                grad = lv.grad;
            } else {
                const double denom = static_cast<double>(count * n_vars);
                for (std::size_t i = 0; i < count; ++i)
                    for (std::size_t v = 0; v < n_vars; ++v) {
                        const std::size_t off = layout.offsets[v];
                        const int bins = layout.bins[v];
                        std::span<const double> logits(out.data() + i * layout.width + off,
                                                       static_cast<std::size_t>(bins));
                        const double r = out(i, off + static_cast<std::size_t>(bins));
                        const auto hl = hybrid_loss(logits, r, y_hybrid[rows[i] * n_vars + v],
                                                    cfg.hybrid_lambda);
                        batch_loss += hl.value / denom;
                        for (int b = 0; b < bins; ++b)
                            grad(i, off + static_cast<std::size_t>(b)) =
                                hl.grad_logits[static_cast<std::size_t>(b)] / denom;
                        grad(i, off + static_cast<std::size_t>(bins)) = hl.grad_offset / denom;
                    }
            }
            if (!std::isfinite(batch_loss)) throw TrainingDiverged(epoch);
            loss_sum += batch_loss;
            ++n_batches;
            if (cfg.lr > 0.0) {
                model.backward(grad);
                opt.step(params);
                model.step = opt.step_count();
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, n_batches));
        if (data.val.size() > 0) {
            const auto ev = evaluate_model(model, data.val, cfg, scaler, codecs,
                                           data.variable_names);
            rec.val_r2 = ev.global.r2;
            if (rec.val_r2 > best_val) {
                best_val = rec.val_r2;
                best_state = model.state_snapshot();
                result.best_epoch = epoch;
            }
        } else {
            rec.val_r2 = std::numeric_limits<double>::quiet_NaN();
        }
        result.history.push_back(rec);
    }

    if (!best_state.empty()) {
        model.restore_state(best_state);
        result.best_val_r2 = best_val;
    } else if (!result.history.empty()) {
        result.best_epoch = result.history.back().epoch;
    }
    return result;
}

TrainedModel run_training(const SpectralLibrary& lib, const SplitAssignment& split,
                          const TrainConfig& cfg, TrainResult* result) {
    cfg.validate();
    PreparedData data = prepare_data(lib, split, cfg);

    TrainedModel tm;
    tm.config = cfg;
    tm.variable_names = data.variable_names;
    tm.input_wavelengths = data.wavelengths;
    tm.scaler = fit_target_scaler(lib, split.train);

    std::size_t head_width = 0;
    if (cfg.loss == LossKind::Hybrid) {
        for (std::size_t v = 0; v < lib.n_vars(); ++v) {
            const auto col = lib.variable_column(v, split.train);
            tm.codecs.push_back(QuantileCodec::fit(col, cfg.n_bins));
            head_width += static_cast<std::size_t>(tm.codecs.back().n_bins()) + 1;
        }
    }

    tm.model = build_network(cfg.net_spec(lib.n_vars()), cfg.seed, head_width);
    TrainResult r = train(tm.model, data, cfg, tm.scaler, tm.codecs);
    if (result) *result = std::move(r);
    return tm;
}

void save_trained(const TrainedModel& tm, const std::string& path) {
    nlohmann::ordered_json extras;
    extras["train_config"] = tm.config.to_json();
    extras["netspec"] = tm.config.net_spec(tm.variable_names.size()).to_json();
    extras["variables"] = tm.variable_names;
    extras["wavelengths"] = tm.input_wavelengths;
    extras["scaler"] = {{"mean", tm.scaler.mean}, {"std", tm.scaler.std}};
    extras["codecs"] = nlohmann::ordered_json::array();
    for (std::size_t v = 0; v < tm.codecs.size(); ++v)
        extras["codecs"].push_back(
            {{"variable", tm.variable_names[v]}, {"edges", tm.codecs[v].edges()}});
    nn::save_model(tm.model, path, extras);
}

TrainedModel load_trained(const std::string& path) {
    nlohmann::ordered_json extras;
    TrainedModel tm;
    tm.model = nn::load_model(path, &extras);
    tm.config = TrainConfig::from_json(extras.at("train_config"));
    tm.variable_names = extras.at("variables").get<std::vector<std::string>>();
    tm.input_wavelengths = extras.at("wavelengths").get<std::vector<double>>();
    tm.scaler.mean = extras.at("scaler").at("mean").get<std::vector<double>>();
    tm.scaler.std = extras.at("scaler").at("std").get<std::vector<double>>();
    for (const auto& cj : extras.at("codecs"))
        tm.codecs.push_back(QuantileCodec::from_edges(cj.at("edges").get<std::vector<double>>()));
    return tm;
}

}  // namespace soilspec
