#include "soilspec/sensor.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace soilspec {

namespace {
bool in_window(double x, const std::pair<double, double>& w) {
    return x >= w.first && x <= w.second;
}
}  // namespace

std::vector<SensorBand> SensorConfig::active_bands() const {
    std::vector<SensorBand> out;
    out.reserve(bands.size());
    for (const auto& b : bands) {
        bool removed = false;
        for (const auto& w : removed_windows)
            if (in_window(b.center, w)) {
                removed = true;
                break;
            }
        if (!removed) out.push_back(b);
    }
    return out;
}

void SensorConfig::validate() const {
    if (bands.empty()) throw std::invalid_argument("sensor config: no bands");
    for (std::size_t i = 0; i < bands.size(); ++i) {
        if (!(bands[i].fwhm > 0.0))
            throw std::invalid_argument("sensor config: fwhm must be positive");
        if (i > 0 && !(bands[i - 1].center < bands[i].center))
            throw std::invalid_argument("sensor config: centers not strictly increasing");
    }
    for (const auto& w : removed_windows)
        if (!(w.first < w.second))
            throw std::invalid_argument("sensor config: bad removed window");
}

SensorConfig default_prisma_config() {
    SensorConfig cfg;
    cfg.removed_windows = {{1338.9, 1501.7}, {1784.4, 1993.2}};
    // VNIR: 61 bands, 400..1000 nm at 10 nm, FWHM 10.
    for (int k = 0; k <= 60; ++k)
        cfg.bands.push_back({400.0 + 10.0 * k, 10.0});
    // SWIR: 1010 nm upward at 10.3 nm, FWHM 12; window removal then leaves
    // 109 of these for a 170-band total.
    for (int k = 0;; ++k) {
        const double center = 1010.0 + 10.3 * k;
        if (center > 2500.0) break;
        cfg.bands.push_back({center, 12.0});
    }
    cfg.validate();
    return cfg;
}

SensorConfig load_sensor_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    SensorConfig cfg;
    for (const auto& b : j.at("bands"))
        cfg.bands.push_back({b.at("center").get<double>(), b.at("fwhm").get<double>()});
    if (j.contains("removed_windows"))
        for (const auto& w : j["removed_windows"])
            cfg.removed_windows.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
    cfg.validate();
    return cfg;
}

void save_sensor_config(const SensorConfig& cfg, const std::string& path) {
    nlohmann::ordered_json j;
    j["bands"] = nlohmann::ordered_json::array();
    for (const auto& b : cfg.bands)
        j["bands"].push_back({{"center", b.center}, {"fwhm", b.fwhm}});
    j["removed_windows"] = nlohmann::ordered_json::array();
    for (const auto& w : cfg.removed_windows)
        j["removed_windows"].push_back({w.first, w.second});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << j.dump(2) << '\n';
}

std::vector<double> simulate_sensor(std::span<const double> spectrum,
                                    std::span<const double> wavelengths,
                                    const SensorConfig& cfg) {
    if (spectrum.size() != wavelengths.size())
        throw std::invalid_argument("simulate_sensor: spectrum/wavelength size mismatch");
    const auto active = cfg.active_bands();
    std::vector<double> out;
    out.reserve(active.size());
    for (const auto& band : active) {
        const double sigma = band.fwhm / kFwhmToSigma;
        double wsum = 0.0, vsum = 0.0;
        for (std::size_t i = 0; i < wavelengths.size(); ++i) {
            const double d = wavelengths[i] - band.center;
            const double w = std::exp(-d * d / (2.0 * sigma * sigma));
            wsum += w;
            vsum += w * spectrum[i];
        }
        if (wsum < 1e-12)
            throw std::invalid_argument("simulate_sensor: band at " + std::to_string(band.center) +
                                        " nm has no support on the wavelength grid");
        out.push_back(vsum / wsum);
    }
    return out;
}

SpectralLibrary simulate_sensor_library(const SpectralLibrary& lib, const SensorConfig& cfg) {
    const auto active = cfg.active_bands();
    SpectralLibrary out;
    out.wavelengths.reserve(active.size());
    for (const auto& b : active) out.wavelengths.push_back(b.center);
    out.spectra = Tensor({lib.n_samples(), active.size()});
    for (std::size_t i = 0; i < lib.n_samples(); ++i) {
        const auto sim = simulate_sensor(lib.spectrum(i), lib.wavelengths, cfg);
        for (std::size_t b = 0; b < sim.size(); ++b) out.spectra(i, b) = sim[b];
    }
    out.targets = lib.targets;
    out.variable_names = lib.variable_names;
    out.coords = lib.coords;
    out.dropped_rows = 0;
    out.validate();
    return out;
}

}  // namespace soilspec
