#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "soilspec/tensor.hpp"

namespace soilspec {

/// A spectral library: one reflectance spectrum per sample on a shared
/// wavelength grid, plus the target soil variables and optional coordinates.
struct SpectralLibrary {
    std::vector<double> wavelengths;         // strictly increasing band centers (nm)
    Tensor spectra;                          // [n_samples, n_bands]
    Tensor targets;                          // [n_samples, n_vars]
    std::vector<std::string> variable_names;
    std::optional<Tensor> coords;            // [n_samples, 2] (lat, lon)
    std::size_t dropped_rows = 0;            // rows discarded at load time

    std::size_t n_samples() const { return spectra.rank() == 2 ? spectra.dim(0) : 0; }
    std::size_t n_bands() const { return wavelengths.size(); }
    std::size_t n_vars() const { return variable_names.size(); }

    std::span<const double> spectrum(std::size_t i) const {
        return {spectra.data() + i * n_bands(), n_bands()};
    }
    std::span<const double> target_row(std::size_t i) const {
        return {targets.data() + i * n_vars(), n_vars()};
    }
    /// Column copy of one variable, optionally restricted to an index subset.
    std::vector<double> variable_column(std::size_t var) const;
    std::vector<double> variable_column(std::size_t var, std::span<const std::size_t> subset) const;

    std::size_t variable_index(const std::string& name) const;

    /// Checks the structural invariants; throws on violation.
    void validate() const;
};

struct CsvSchema {
    /// Explicit target column names; empty means every non-numeric header
    /// that is not a coordinate or ignored column is a target.
    std::vector<std::string> target_columns;
    std::string lat_column = "lat";
    std::string lon_column = "lon";
    std::vector<std::string> ignore_columns;
};

/// Loads a CSV library: numeric headers are band centers in nm, named
/// columns are targets. Rows with any missing or non-finite value are
/// dropped and counted.
SpectralLibrary load_library(const std::string& path, const CsvSchema& schema = {});

void save_library(const SpectralLibrary& lib, const std::string& path);

struct SplitAssignment {
    std::vector<std::size_t> train, val, test;
    std::array<double, 3> fractions{};
    std::uint64_t seed = 0;
    int n_strat_bins = 10;

    std::span<const std::size_t> subset(const std::string& name) const;
};

/// Quantile-stratified split. Bins are built on the pivot variable (the one
/// with the most distinct values); indices are shuffled within bins and each
/// bin is allocated to the splits by cumulative largest-remainder rounding,
/// so split sizes track fractions * n within +-1.
SplitAssignment stratified_split(const SpectralLibrary& lib,
                                 std::array<double, 3> fractions,
                                 std::uint64_t seed, int n_strat_bins);

void save_split(const SplitAssignment& split, const std::string& path);
SplitAssignment load_split(const std::string& path);

/// Zero-mean unit-variance (population) standardization of one spectrum.
std::vector<double> standardize_spectrum(std::span<const double> s);
void standardize_spectrum_inplace(std::span<double> s);

struct TargetScaler {
    std::vector<double> mean;
    std::vector<double> std;
};

TargetScaler fit_target_scaler(const Tensor& train_targets);
TargetScaler fit_target_scaler(const SpectralLibrary& lib, std::span<const std::size_t> train_idx);
std::vector<double> apply_scaler(const TargetScaler& sc, std::span<const double> values);
std::vector<double> invert_scaler(const TargetScaler& sc, std::span<const double> values);

struct AuditRow {
    std::string split_name;
    std::vector<double> percent;  // one cell per bin, sums to ~100
};

struct AuditBlock {
    std::string variable;
    std::vector<AuditRow> rows;  // full, train, val, test (non-empty splits only)
};

/// Per-variable share of each split falling in the full-library quantile
/// bins. Bin edges with duplicated data collapse, so blocks can have fewer
/// than n_bins columns.
std::vector<AuditBlock> quantile_audit(const SpectralLibrary& lib, const SplitAssignment& split,
                                       int n_bins = 10);

std::string format_audit(const std::vector<AuditBlock>& audit);

}  // namespace soilspec
