#pragma once

#include <cstdint>

#include "soilspec/data.hpp"

namespace soilspec {

/// Synthetic spectral library: each spectrum is a random convex mixture of
/// fixed Gaussian endmembers plus relative noise, and each target variable is
/// a fixed linear functional of the mixture weights (a shared component plus
/// a variable-specific one, so variables correlate the way soil properties
/// do). Deterministic for a fixed seed.
struct MixtureLibraryOptions {
    std::size_t n_samples = 2000;
    std::size_t n_bands = 256;
    std::size_t n_endmembers = 5;
    std::size_t n_vars = 12;
    double noise = 0.01;
    std::uint64_t seed = 0;
    bool with_coords = false;
    double wl_min = 400.0;
    double wl_max = 2500.0;
    double shared_weight = 0.8;  // fraction of each target driven by the shared component
};

SpectralLibrary make_mixture_library(const MixtureLibraryOptions& opt);

}  // namespace soilspec
