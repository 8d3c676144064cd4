#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace soilspec {

struct CropResampleSpec {
    double f_min = 400.0;
    double f_max = 2500.0;
    std::size_t f_insz = 1024;  // target length, power of two
};

bool is_power_of_two(std::size_t n);

/// Index range [lo, hi] of bands with f_min <= wavelength <= f_max;
/// throws if the crop is empty.
std::pair<std::size_t, std::size_t> crop_range(std::span<const double> wavelengths,
                                               double f_min, double f_max);

struct Cropped {
    std::vector<double> values;
    std::vector<double> wavelengths;
};

Cropped crop(std::span<const double> spectrum, std::span<const double> wavelengths,
             double f_min, double f_max);

/// Piecewise-linear resampling on the index-normalized axis; endpoints are
/// preserved exactly.
std::vector<double> resample_linear(std::span<const double> spectrum, std::size_t n_out);

}  // namespace soilspec
