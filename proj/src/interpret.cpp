#include "soilspec/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "soilspec/resample.hpp"

namespace soilspec {

std::vector<double> gradcam_map(nn::Model& model, std::span<const double> input,
                                std::size_t var_index, int target_block) {
    if (model.n_blocks() == 0)
        throw std::invalid_argument("gradcam: model has no building blocks");
    const int block = target_block < 0 ? static_cast<int>(model.n_blocks()) - 1 : target_block;
    if (block >= static_cast<int>(model.n_blocks()))
        throw std::invalid_argument("gradcam: target block out of range");

    Tensor x({1, 1, input.size()});
    std::copy(input.begin(), input.end(), x.data());

    model.set_probe(block);
    try {
        const Tensor out = model.forward(x, false);
        if (var_index >= out.dim(1))
            throw std::invalid_argument("gradcam: variable index out of range");
        Tensor seed(out.shape());
        seed(0, var_index) = 1.0;
        model.backward(seed);
    } catch (...) {
        model.set_probe(-1);
        throw;
    }
    const Tensor act = model.probe_activation();   // [1, C, P]
    const Tensor grad = model.probe_gradient();    // [1, C, P]
    model.set_probe(-1);

    const std::size_t C = act.dim(1), P = act.dim(2);
    std::vector<double> alpha(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < P; ++p) s += grad(0, c, p);
        alpha[c] = s / static_cast<double>(P);
    }

    std::vector<double> map(P, 0.0);
    for (std::size_t p = 0; p < P; ++p) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += alpha[c] * act(0, c, p);
        map[p] = std::max(0.0, s);
    }

    std::vector<double> curve = P >= 2 ? resample_linear(map, input.size())
                                       : std::vector<double>(input.size(), map.empty() ? 0.0 : map[0]);
    double mx = 0.0;
    for (double v : curve) mx = std::max(mx, v);
    if (mx > 0.0)
        for (double& v : curve) v /= mx;
    return curve;
}

ImportanceCurve gradcam_1d(nn::Model& model, std::span<const double> input,
                           std::span<const double> wavelengths, std::size_t var_index,
                           int target_block) {
    if (wavelengths.size() != input.size())
        throw std::invalid_argument("gradcam: wavelength grid size mismatch");
    ImportanceCurve curve;
    curve.wavelengths.assign(wavelengths.begin(), wavelengths.end());
    curve.weights = gradcam_map(model, input, var_index, target_block);
    return curve;
}

ImportanceCurve gradcam_average(nn::Model& model, const Tensor& inputs,
                                std::span<const double> wavelengths, std::size_t var_index,
                                int target_block) {
    if (inputs.rank() != 2 || inputs.dim(0) == 0)
        throw std::invalid_argument("gradcam_average: needs a non-empty [n, length] set");
    const std::size_t n = inputs.dim(0), L = inputs.dim(1);
    if (wavelengths.size() != L)
        throw std::invalid_argument("gradcam_average: wavelength grid size mismatch");

    std::vector<double> acc(L, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto curve =
            gradcam_map(model, {inputs.data() + i * L, L}, var_index, target_block);
        for (std::size_t p = 0; p < L; ++p) acc[p] += curve[p];
    }
    for (double& v : acc) v /= static_cast<double>(n);
    double mx = 0.0;
    for (double v : acc) mx = std::max(mx, v);
    if (mx > 0.0)
        for (double& v : acc) v /= mx;

    ImportanceCurve curve;
    curve.wavelengths.assign(wavelengths.begin(), wavelengths.end());
    curve.weights = std::move(acc);
    return curve;
}

Tensor idw_interpolate(const std::vector<GeoPoint>& points, const RasterSpec& spec) {
    if (points.empty()) throw std::invalid_argument("idw_interpolate: no points");
    if (spec.width < 1 || spec.height < 1)
        throw std::invalid_argument("idw_interpolate: raster must be at least 1x1");
    if (!(spec.power > 0.0)) throw std::invalid_argument("idw_interpolate: power must be > 0");

    Tensor grid({spec.height, spec.width});
    const double dlat = (spec.lat_max - spec.lat_min) / static_cast<double>(spec.height);
    const double dlon = (spec.lon_max - spec.lon_min) / static_cast<double>(spec.width);
    for (std::size_t r = 0; r < spec.height; ++r) {
        const double lat = spec.lat_max - (static_cast<double>(r) + 0.5) * dlat;
        for (std::size_t c = 0; c < spec.width; ++c) {
            const double lon = spec.lon_min + (static_cast<double>(c) + 0.5) * dlon;
            double wsum = 0.0, vsum = 0.0;
            bool exact = false;
            for (const auto& p : points) {
                const double d = std::hypot(lat - p.lat, lon - p.lon);
                if (d < 1e-12) {
                    grid(r, c) = p.value;
                    exact = true;
                    break;
                }
                const double w = 1.0 / std::pow(d, spec.power);
                wsum += w;
                vsum += w * p.value;
            }
            if (!exact) grid(r, c) = vsum / wsum;
        }
    }
    return grid;
}

void emit_raster(const Tensor& grid, const RasterSpec& spec, const std::string& path) {
    if (grid.rank() != 2) throw std::invalid_argument("emit_raster: grid must be rank 2");
    if (!grid.all_finite()) throw std::invalid_argument("emit_raster: non-finite grid values");
    const std::size_t h = grid.dim(0), w = grid.dim(1);

    double lo, hi;
    if (spec.value_range) {
        lo = spec.value_range->first;
        hi = spec.value_range->second;
    } else {
        lo = hi = grid[0];
        for (std::size_t i = 0; i < grid.numel(); ++i) {
            lo = std::min(lo, grid[i]);
            hi = std::max(hi, grid[i]);
        }
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    for (std::size_t i = 0; i < grid.numel(); ++i) {
        double t = hi > lo ? (grid[i] - lo) / (hi - lo) : 0.0;
        const int byte = std::clamp(static_cast<int>(std::lround(t * 255.0)), 0, 255);
        out.put(static_cast<char>(byte));
    }
    if (!out) throw std::runtime_error("write failed: " + path);

    nlohmann::ordered_json side;
    side["width"] = w;
    side["height"] = h;
    side["value_min"] = lo;
    side["value_max"] = hi;
    side["lat_min"] = spec.lat_min;
    side["lat_max"] = spec.lat_max;
    side["lon_min"] = spec.lon_min;
    side["lon_max"] = spec.lon_max;
    side["idw_power"] = spec.power;
    std::ofstream sidecar(path + ".json");
    if (!sidecar) throw std::runtime_error("cannot write file: " + path + ".json");
    sidecar << side.dump(2) << '\n';
}

void emit_scatter(std::span<const double> pred, std::span<const double> target,
                  const std::string& path) {
    if (pred.size() != target.size())
        throw std::invalid_argument("emit_scatter: size mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "target,prediction\n";
    for (std::size_t i = 0; i < pred.size(); ++i) out << target[i] << ',' << pred[i] << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace soilspec
