#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "soilspec/nn.hpp"
#include "soilspec/tensor.hpp"

namespace soilspec {

/// Spectral-band importance: non-negative weights on the model-input grid,
/// normalized so the maximum is 1 (an all-zero map stays all-zero).
struct ImportanceCurve {
    std::vector<double> wavelengths;
    std::vector<double> weights;
};

/// GradCAM map of one input at the output of building block `target_block`
/// (-1 selects the last block): channel weights are the position-averaged
/// gradients of output `var_index`, the map is the ReLU of the weighted
/// channel sum, linearly upsampled to the input length and max-normalized.
std::vector<double> gradcam_map(nn::Model& model, std::span<const double> input,
                                std::size_t var_index, int target_block = -1);

ImportanceCurve gradcam_1d(nn::Model& model, std::span<const double> input,
                           std::span<const double> wavelengths, std::size_t var_index,
                           int target_block = -1);

/// Pointwise mean of per-sample curves over a set of inputs [n, length],
/// re-normalized to max 1.
ImportanceCurve gradcam_average(nn::Model& model, const Tensor& inputs,
                                std::span<const double> wavelengths, std::size_t var_index,
                                int target_block = -1);

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;
    double value = 0.0;
};

struct RasterSpec {
    double lat_min = 0.0, lat_max = 1.0;
    double lon_min = 0.0, lon_max = 1.0;
    std::size_t width = 1, height = 1;
    double power = 2.0;  // IDW exponent
    std::optional<std::pair<double, double>> value_range;  // color scaling
};

/// Inverse-distance-weighted raster [height, width]; rows run north to south.
/// A cell center within 1e-12 degrees of a sample takes its value exactly.
Tensor idw_interpolate(const std::vector<GeoPoint>& points, const RasterSpec& spec);

/// Binary PGM plus a JSON sidecar recording the value range and bounding box.
void emit_raster(const Tensor& grid, const RasterSpec& spec, const std::string& path);

/// CSV of (target, prediction) pairs.
void emit_scatter(std::span<const double> pred, std::span<const double> target,
                  const std::string& path);

}  // namespace soilspec
