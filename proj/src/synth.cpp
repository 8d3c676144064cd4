#include "soilspec/synth.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "soilspec/rng.hpp"

namespace soilspec {

SpectralLibrary make_mixture_library(const MixtureLibraryOptions& opt) {
    if (opt.n_samples < 2 || opt.n_bands < 2 || opt.n_endmembers < 1 || opt.n_vars < 1)
        throw std::invalid_argument("make_mixture_library: degenerate options");
    Rng rng(opt.seed);

    SpectralLibrary lib;
    lib.wavelengths.resize(opt.n_bands);
    const double range = opt.wl_max - opt.wl_min;
    for (std::size_t b = 0; b < opt.n_bands; ++b)
        lib.wavelengths[b] =
            opt.wl_min + range * static_cast<double>(b) / static_cast<double>(opt.n_bands - 1);

    // Fixed Gaussian endmembers spread across the grid.
    const std::size_t K = opt.n_endmembers;
    std::vector<std::vector<double>> endmembers(K, std::vector<double>(opt.n_bands));
    for (std::size_t k = 0; k < K; ++k) {
        const double center =
            opt.wl_min + range * (0.1 + 0.8 * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(1, K - 1)));
        const double sigma = range / static_cast<double>(K + 2) * rng.uniform(0.8, 1.3);
        const double amp = rng.uniform(0.5, 1.0);
        for (std::size_t b = 0; b < opt.n_bands; ++b) {
            const double d = lib.wavelengths[b] - center;
            endmembers[k][b] = amp * std::exp(-d * d / (2.0 * sigma * sigma));
        }
    }

    // Target functionals: shared direction plus a variable-specific one. The
    // shared direction is a fixed spread pattern so every variable carries a
    // strong common factor, the way correlated soil properties do.
    std::vector<double> shared_dir(K);
    for (std::size_t k = 0; k < K; ++k)
        shared_dir[k] = K > 1 ? -1.0 + 2.0 * double(k) / double(K - 1) : 1.0;
    std::vector<std::vector<double>> var_dir(opt.n_vars, std::vector<double>(K));
    std::vector<double> var_scale(opt.n_vars), var_offset(opt.n_vars);
    for (std::size_t v = 0; v < opt.n_vars; ++v) {
        for (double& x : var_dir[v]) x = rng.uniform(-1.0, 1.0);
        var_scale[v] = std::pow(10.0, static_cast<double>(v % 3));  // unit variety
        var_offset[v] = rng.uniform(0.0, 5.0) * var_scale[v];
    }

    lib.spectra = Tensor({opt.n_samples, opt.n_bands});
    lib.targets = Tensor({opt.n_samples, opt.n_vars});
    lib.variable_names.resize(opt.n_vars);
    for (std::size_t v = 0; v < opt.n_vars; ++v) lib.variable_names[v] = "var" + std::to_string(v);
    if (opt.with_coords) lib.coords = Tensor({opt.n_samples, 2});

    std::vector<double> w(K);
    for (std::size_t i = 0; i < opt.n_samples; ++i) {
        // Convex mixture weights (flat Dirichlet via normalized exponentials).
        double wsum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            w[k] = -std::log(1.0 - rng.uniform());
            wsum += w[k];
        }
        for (double& x : w) x /= wsum;

        for (std::size_t b = 0; b < opt.n_bands; ++b) {
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += w[k] * endmembers[k][b];
            lib.spectra(i, b) = s + opt.noise * rng.normal();
        }

        double shared = 0.0;
        for (std::size_t k = 0; k < K; ++k) shared += w[k] * shared_dir[k];
        for (std::size_t v = 0; v < opt.n_vars; ++v) {
            double own = 0.0;
            for (std::size_t k = 0; k < K; ++k) own += w[k] * var_dir[v][k];
            const double t = opt.shared_weight * shared + (1.0 - opt.shared_weight) * own;
            lib.targets(i, v) = var_scale[v] * t + var_offset[v];
        }

        if (opt.with_coords) {
            (*lib.coords)(i, 0) = rng.uniform(35.0, 60.0);   // lat
            (*lib.coords)(i, 1) = rng.uniform(-10.0, 25.0);  // lon
        }
    }

    lib.validate();
    return lib;
}

}  // namespace soilspec
