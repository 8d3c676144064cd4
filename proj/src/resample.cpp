#include "soilspec/resample.hpp"

#include <algorithm>
#include <stdexcept>

namespace soilspec {

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

std::pair<std::size_t, std::size_t> crop_range(std::span<const double> wavelengths,
                                               double f_min, double f_max) {
    if (!(f_min < f_max)) throw std::invalid_argument("crop: f_min must be < f_max");
    auto lo_it = std::lower_bound(wavelengths.begin(), wavelengths.end(), f_min);
    auto hi_it = std::upper_bound(wavelengths.begin(), wavelengths.end(), f_max);
    if (lo_it >= hi_it) throw std::invalid_argument("crop: empty crop");
    return {static_cast<std::size_t>(lo_it - wavelengths.begin()),
            static_cast<std::size_t>(hi_it - wavelengths.begin()) - 1};
}

Cropped crop(std::span<const double> spectrum, std::span<const double> wavelengths,
             double f_min, double f_max) {
    if (spectrum.size() != wavelengths.size())
        throw std::invalid_argument("crop: spectrum/wavelength size mismatch");
    auto [lo, hi] = crop_range(wavelengths, f_min, f_max);
    Cropped out;
    out.values.assign(spectrum.begin() + static_cast<std::ptrdiff_t>(lo),
                      spectrum.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
    out.wavelengths.assign(wavelengths.begin() + static_cast<std::ptrdiff_t>(lo),
                           wavelengths.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
    return out;
}

std::vector<double> resample_linear(std::span<const double> spectrum, std::size_t n_out) {
    if (spectrum.size() < 2) throw std::invalid_argument("resample_linear: input too short");
    if (n_out < 2) throw std::invalid_argument("resample_linear: n_out must be >= 2");
    const std::size_t n_in = spectrum.size();
    std::vector<double> out(n_out);
    const double scale = static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
    for (std::size_t j = 0; j < n_out; ++j) {
        const double pos = static_cast<double>(j) * scale;
        std::size_t lo = static_cast<std::size_t>(pos);
        if (lo >= n_in - 1) lo = n_in - 2;
        const double frac = pos - static_cast<double>(lo);
        out[j] = spectrum[lo] + frac * (spectrum[lo + 1] - spectrum[lo]);
    }
    out[0] = spectrum[0];
    out[n_out - 1] = spectrum[n_in - 1];
    return out;
}

}  // namespace soilspec
