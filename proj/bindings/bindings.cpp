#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "soilspec/arch.hpp"
#include "soilspec/data.hpp"
#include "soilspec/grid.hpp"
#include "soilspec/interpret.hpp"
#include "soilspec/losses.hpp"
#include "soilspec/metrics.hpp"
#include "soilspec/resample.hpp"
#include "soilspec/sensor.hpp"
#include "soilspec/synth.hpp"
#include "soilspec/train.hpp"

namespace py = pybind11;
using namespace soilspec;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<std::size_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] =
        static_cast<std::size_t>(a.shape(i));
    Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
    return a;
}

std::vector<double> vec_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return std::vector<double>(a.data(), a.data() + a.size());
}

}  // namespace

PYBIND11_MODULE(_soilspec, m) {
    m.doc() = "Spectral regression engine for soil property estimation";

    py::class_<SpectralLibrary>(m, "SpectralLibrary")
        .def(py::init([](std::vector<double> wavelengths, py::array_t<double> spectra,
                         py::array_t<double> targets, std::vector<std::string> names,
                         std::optional<py::array_t<double>> coords) {
                 SpectralLibrary lib;
                 lib.wavelengths = std::move(wavelengths);
                 lib.spectra = tensor_from_array(spectra);
                 lib.targets = tensor_from_array(targets);
                 lib.variable_names = std::move(names);
                 if (coords) lib.coords = tensor_from_array(*coords);
                 lib.validate();
                 return lib;
             }),
             py::arg("wavelengths"), py::arg("spectra"), py::arg("targets"),
             py::arg("variable_names"), py::arg("coords") = std::nullopt)
        .def_readonly("wavelengths", &SpectralLibrary::wavelengths)
        .def_readonly("variable_names", &SpectralLibrary::variable_names)
        .def_readonly("dropped_rows", &SpectralLibrary::dropped_rows)
        .def_property_readonly("spectra",
                               [](const SpectralLibrary& l) { return array_from_tensor(l.spectra); })
        .def_property_readonly("targets",
                               [](const SpectralLibrary& l) { return array_from_tensor(l.targets); })
        .def_property_readonly("coords",
                               [](const SpectralLibrary& l) -> py::object {
                                   if (!l.coords) return py::none();
                                   return array_from_tensor(*l.coords);
                               })
        .def_property_readonly("n_samples", &SpectralLibrary::n_samples)
        .def_property_readonly("n_bands", &SpectralLibrary::n_bands)
        .def_property_readonly("n_vars", &SpectralLibrary::n_vars)
        .def("save", &save_library, py::arg("path"));

    m.def("load_library", [](const std::string& path) { return load_library(path); },
          py::arg("path"));

    py::class_<SplitAssignment>(m, "SplitAssignment")
        .def_readonly("train", &SplitAssignment::train)
        .def_readonly("val", &SplitAssignment::val)
        .def_readonly("test", &SplitAssignment::test)
        .def_readonly("seed", &SplitAssignment::seed)
        .def("save", &save_split, py::arg("path"));

    m.def("stratified_split",
          [](const SpectralLibrary& lib, std::array<double, 3> fractions, std::uint64_t seed,
             int bins) { return stratified_split(lib, fractions, seed, bins); },
          py::arg("library"), py::arg("fractions"), py::arg("seed") = 0, py::arg("bins") = 10);
    m.def("load_split", &load_split, py::arg("path"));

    m.def("standardize_spectrum",
          [](py::array_t<double> s) { return standardize_spectrum(vec_from_array(s)); });
    m.def("resample_linear",
          [](py::array_t<double> s, std::size_t n) { return resample_linear(vec_from_array(s), n); });
    m.def("crop", [](py::array_t<double> s, py::array_t<double> wl, double lo, double hi) {
        auto c = crop(vec_from_array(s), vec_from_array(wl), lo, hi);
        return py::make_tuple(c.values, c.wavelengths);
    });

    py::class_<SensorBand>(m, "SensorBand")
        .def(py::init<double, double>(), py::arg("center"), py::arg("fwhm"))
        .def_readwrite("center", &SensorBand::center)
        .def_readwrite("fwhm", &SensorBand::fwhm);

    py::class_<SensorConfig>(m, "SensorConfig")
        .def(py::init<>())
        .def_readwrite("bands", &SensorConfig::bands)
        .def_readwrite("removed_windows", &SensorConfig::removed_windows)
        .def("active_bands", &SensorConfig::active_bands)
        .def("save", &save_sensor_config, py::arg("path"));

    m.def("default_prisma_config", &default_prisma_config);
    m.def("load_sensor_config", &load_sensor_config, py::arg("path"));
    m.def("simulate_sensor",
          [](py::array_t<double> s, py::array_t<double> wl, const SensorConfig& cfg) {
              return simulate_sensor(vec_from_array(s), vec_from_array(wl), cfg);
          });
    m.def("simulate_sensor_library", &simulate_sensor_library, py::arg("library"),
          py::arg("config"));

    m.def("mae", [](py::array_t<double> p, py::array_t<double> t) {
        return mae(vec_from_array(p), vec_from_array(t));
    });
    m.def("mse", [](py::array_t<double> p, py::array_t<double> t) {
        return mse(vec_from_array(p), vec_from_array(t));
    });
    m.def("rmse", [](py::array_t<double> p, py::array_t<double> t) {
        return rmse(vec_from_array(p), vec_from_array(t));
    });
    m.def("r2", [](py::array_t<double> p, py::array_t<double> t) {
        return r2(vec_from_array(p), vec_from_array(t));
    });
    m.def("pearson", [](py::array_t<double> p, py::array_t<double> t) {
        return pearson(vec_from_array(p), vec_from_array(t));
    });

    py::class_<HybridTarget>(m, "HybridTarget")
        .def_readonly("bin", &HybridTarget::bin)
        .def_readonly("offset", &HybridTarget::offset);

    py::class_<QuantileCodec>(m, "QuantileCodec")
        .def_static("fit",
                    [](py::array_t<double> values, int bins) {
                        return QuantileCodec::fit(vec_from_array(values), bins);
                    },
                    py::arg("values"), py::arg("bins") = 10)
        .def("encode", &QuantileCodec::encode)
        .def("decode", py::overload_cast<int, double>(&QuantileCodec::decode, py::const_))
        .def_property_readonly("edges", &QuantileCodec::edges)
        .def_property_readonly("n_bins", &QuantileCodec::n_bins);

    py::class_<NetSpec>(m, "NetSpec")
        .def(py::init([](std::size_t n_in, std::size_t n_out, int p_min, int p_max, int n_refine,
                         bool use_norm, double leak, std::size_t proj_hidden, std::size_t n_vars) {
                 NetSpec s{n_in, n_out, p_min, p_max, n_refine, use_norm, leak, proj_hidden, n_vars};
                 s.validate();
                 return s;
             }),
             py::arg("n_in"), py::arg("n_out") = 4, py::arg("p_min") = 4, py::arg("p_max") = 7,
             py::arg("n_refine") = 1, py::arg("use_norm") = true, py::arg("leak") = 0.2,
             py::arg("proj_hidden") = 70, py::arg("n_vars") = 12)
        .def_readwrite("n_in", &NetSpec::n_in)
        .def_readwrite("n_out", &NetSpec::n_out)
        .def_readwrite("n_vars", &NetSpec::n_vars);

    m.def("num_blocks", &num_blocks, py::arg("n_in"), py::arg("n_out"));
    m.def("filters_for_block", &filters_for_block, py::arg("i"), py::arg("p_min"),
          py::arg("p_max"));
    m.def("block_fov", &block_fov, py::arg("n_refine"));
    m.def("net_fov", &net_fov, py::arg("n_blocks"), py::arg("n_refine"));
    m.def("exact_receptive_field", &exact_receptive_field, py::arg("n_blocks"),
          py::arg("n_refine"));
    m.def("block_param_count",
          [](std::size_t ch_in, std::size_t ch_out, int n_refine, bool use_norm, bool with_bias) {
              return block_param_count({ch_in, ch_out, n_refine, use_norm, 0.0}, with_bias);
          },
          py::arg("ch_in"), py::arg("ch_out"), py::arg("n_refine"), py::arg("use_norm"),
          py::arg("with_bias") = true);
    m.def("count_params",
          [](const NetSpec& spec) { return build_network(spec, 0).count_params(); },
          py::arg("spec"));
    m.def("summarize", &summarize, py::arg("spec"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("f_min", &TrainConfig::f_min)
        .def_readwrite("f_max", &TrainConfig::f_max)
        .def_readwrite("f_insz", &TrainConfig::f_insz)
        .def_readwrite("leak", &TrainConfig::leak)
        .def_readwrite("use_norm", &TrainConfig::use_norm)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("p_min", &TrainConfig::p_min)
        .def_readwrite("p_max", &TrainConfig::p_max)
        .def_readwrite("n_out", &TrainConfig::n_out)
        .def_readwrite("proj_hidden", &TrainConfig::proj_hidden)
        .def_readwrite("n_refine", &TrainConfig::n_refine)
        .def_readwrite("n_bins", &TrainConfig::n_bins)
        .def_property("loss",
                      [](const TrainConfig& c) { return to_string(c.loss); },
                      [](TrainConfig& c, const std::string& s) { c.loss = loss_kind_from_string(s); });

    py::class_<TrainedModel>(m, "TrainedModel")
        .def_readonly("variable_names", &TrainedModel::variable_names)
        .def_readonly("input_wavelengths", &TrainedModel::input_wavelengths)
        .def_property_readonly("n_params",
                               [](const TrainedModel& tm) { return tm.model.count_params(); })
        .def("predict",
             [](TrainedModel& tm, py::array_t<double> spectra, py::array_t<double> wavelengths) {
                 const Tensor s = tensor_from_array(spectra);
                 const auto wl = vec_from_array(wavelengths);
                 if (s.rank() != 2) throw std::invalid_argument("predict: spectra must be 2-D");
                 Tensor x({s.dim(0), tm.config.f_insz});
                 for (std::size_t i = 0; i < s.dim(0); ++i) {
                     auto p = prepare_spectrum({s.data() + i * s.dim(1), s.dim(1)}, wl, tm.config);
                     std::copy(p.begin(), p.end(), x.data() + i * tm.config.f_insz);
                 }
                 Tensor scaled = predict_scaled(tm.model, x, tm.config, tm.scaler, tm.codecs);
                 Tensor raw(scaled.shape());
                 std::vector<double> row(tm.scaler.mean.size());
                 for (std::size_t i = 0; i < scaled.dim(0); ++i) {
                     for (std::size_t v = 0; v < row.size(); ++v) row[v] = scaled(i, v);
                     const auto r = invert_scaler(tm.scaler, row);
                     for (std::size_t v = 0; v < row.size(); ++v) raw(i, v) = r[v];
                 }
                 return array_from_tensor(raw);
             },
             py::arg("spectra"), py::arg("wavelengths"))
        .def("evaluate",
             [](TrainedModel& tm, const SpectralLibrary& lib, const SplitAssignment& split,
                const std::string& set_name) {
                 const PreparedData data = prepare_data(lib, split, tm.config);
                 const auto ev = evaluate_model(tm.model, data.set(set_name), tm.config, tm.scaler,
                                                tm.codecs, tm.variable_names);
                 py::dict out;
                 out["variables"] = ev.variables;
                 for (const auto& name : kMetricNames) {
                     std::vector<double> vals;
                     for (const auto& mset : ev.per_variable) vals.push_back(mset.get(name));
                     out[name.c_str()] = vals;
                     out[("global_" + name).c_str()] = ev.global.get(name);
                 }
                 return out;
             },
             py::arg("library"), py::arg("split"), py::arg("set") = "test")
        .def("gradcam",
             [](TrainedModel& tm, const SpectralLibrary& lib, const SplitAssignment& split,
                const std::string& var, const std::string& set_name, int block) {
                 const PreparedData data = prepare_data(lib, split, tm.config);
                 const auto curve =
                     gradcam_average(tm.model, data.set(set_name).x, data.wavelengths,
                                     lib.variable_index(var), block);
                 return py::make_tuple(curve.wavelengths, curve.weights);
             },
             py::arg("library"), py::arg("split"), py::arg("var"), py::arg("set") = "test",
             py::arg("block") = -1)
        .def("save", &save_trained, py::arg("path"));

    m.def("train",
          [](const SpectralLibrary& lib, const SplitAssignment& split, const TrainConfig& cfg) {
              TrainResult result;
              TrainedModel tm = run_training(lib, split, cfg, &result);
              py::list history;
              for (const auto& rec : result.history)
                  history.append(py::make_tuple(rec.epoch, rec.train_loss, rec.val_r2));
              return py::make_tuple(std::move(tm), history);
          },
          py::arg("library"), py::arg("split"), py::arg("config"));
    m.def("load_trained", &load_trained, py::arg("path"));

    m.def("idw_interpolate",
          [](const std::vector<std::array<double, 3>>& points, double lat_min, double lat_max,
             double lon_min, double lon_max, std::size_t width, std::size_t height, double power) {
              std::vector<GeoPoint> pts;
              for (const auto& p : points) pts.push_back({p[0], p[1], p[2]});
              RasterSpec spec;
              spec.lat_min = lat_min;
              spec.lat_max = lat_max;
              spec.lon_min = lon_min;
              spec.lon_max = lon_max;
              spec.width = width;
              spec.height = height;
              spec.power = power;
              return array_from_tensor(idw_interpolate(pts, spec));
          },
          py::arg("points"), py::arg("lat_min"), py::arg("lat_max"), py::arg("lon_min"),
          py::arg("lon_max"), py::arg("width"), py::arg("height"), py::arg("power") = 2.0);

    m.def("make_mixture_library",
          [](std::size_t n_samples, std::size_t n_bands, std::size_t n_endmembers,
             std::size_t n_vars, double noise, std::uint64_t seed, bool with_coords) {
              MixtureLibraryOptions opt;
              opt.n_samples = n_samples;
              opt.n_bands = n_bands;
              opt.n_endmembers = n_endmembers;
              opt.n_vars = n_vars;
              opt.noise = noise;
              opt.seed = seed;
              opt.with_coords = with_coords;
              return make_mixture_library(opt);
          },
          py::arg("n_samples") = 2000, py::arg("n_bands") = 256, py::arg("n_endmembers") = 5,
          py::arg("n_vars") = 12, py::arg("noise") = 0.01, py::arg("seed") = 0,
          py::arg("with_coords") = false);

    m.attr("__version__") = "0.1.0";
}
