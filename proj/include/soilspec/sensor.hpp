#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "soilspec/data.hpp"

namespace soilspec {

struct SensorBand {
    double center = 0.0;  // nm
    double fwhm = 0.0;    // nm
};

/// Gaussian spectral-response sensor definition. Bands whose centers fall in
/// a removed window (closed interval) are excluded from simulation output.
struct SensorConfig {
    std::vector<SensorBand> bands;
    std::vector<std::pair<double, double>> removed_windows;

    /// Bands surviving window removal, in center order.
    std::vector<SensorBand> active_bands() const;

    void validate() const;
};

/// Conversion between FWHM and Gaussian sigma: fwhm = 2*sqrt(2 ln 2) * sigma.
inline constexpr double kFwhmToSigma = 2.3548;

/// A PRISMA-like default: 10 nm VNIR grid plus 10.3 nm SWIR grid, which
/// leaves exactly 170 bands once the two water-absorption windows are removed.
SensorConfig default_prisma_config();

SensorConfig load_sensor_config(const std::string& path);
void save_sensor_config(const SensorConfig& cfg, const std::string& path);

/// Gaussian-weighted band averages of one spectrum:
/// out_b = sum_l w_b(l) x(l) / sum_l w_b(l), w_b(l) = exp(-(l-c_b)^2/(2 s_b^2)).
std::vector<double> simulate_sensor(std::span<const double> spectrum,
                                    std::span<const double> wavelengths,
                                    const SensorConfig& cfg);

/// Applies simulate_sensor to every sample, producing a library on the
/// sensor's band-center grid.
SpectralLibrary simulate_sensor_library(const SpectralLibrary& lib, const SensorConfig& cfg);

}  // namespace soilspec
