#include "soilspec/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "soilspec/csv.hpp"
#include "soilspec/losses.hpp"
#include "soilspec/rng.hpp"

namespace soilspec {

namespace {

std::string shortest(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

std::vector<double> SpectralLibrary::variable_column(std::size_t var) const {
    std::vector<double> out(n_samples());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = targets(i, var);
    return out;
}

std::vector<double> SpectralLibrary::variable_column(std::size_t var,
                                                     std::span<const std::size_t> subset) const {
    std::vector<double> out(subset.size());
    for (std::size_t i = 0; i < subset.size(); ++i) out[i] = targets(subset[i], var);
    return out;
}

std::size_t SpectralLibrary::variable_index(const std::string& name) const {
    for (std::size_t i = 0; i < variable_names.size(); ++i)
        if (variable_names[i] == name) return i;
    throw std::invalid_argument("unknown variable: " + name);
}

void SpectralLibrary::validate() const {
    if (wavelengths.empty()) throw std::invalid_argument("library: no wavelength bands");
    for (std::size_t i = 1; i < wavelengths.size(); ++i)
        if (!(wavelengths[i - 1] < wavelengths[i]))
            throw std::invalid_argument("library: wavelengths not strictly increasing");
    if (spectra.rank() != 2 || spectra.dim(1) != wavelengths.size())
        throw std::invalid_argument("library: spectra shape mismatch");
    if (targets.rank() != 2 || targets.dim(0) != spectra.dim(0))
        throw std::invalid_argument("library: targets row count mismatch");
    if (targets.dim(1) != variable_names.size())
        throw std::invalid_argument("library: variable name count mismatch");
    if (!spectra.all_finite()) throw std::invalid_argument("library: non-finite spectra");
    if (!targets.all_finite()) throw std::invalid_argument("library: non-finite targets");
    if (coords && (coords->rank() != 2 || coords->dim(0) != spectra.dim(0) || coords->dim(1) != 2))
        throw std::invalid_argument("library: coords shape mismatch");
}

SpectralLibrary load_library(const std::string& path, const CsvSchema& schema) {
    const CsvTable table = read_csv(path);
    if (table.header.empty() || table.rows.empty())
        throw std::runtime_error("load_library: zero usable rows in " + path);

    enum class Kind { Band, Target, Lat, Lon, Ignore };
    std::vector<Kind> kinds(table.header.size(), Kind::Ignore);
    std::vector<double> wavelengths;
    std::vector<std::string> target_names;
    std::vector<std::size_t> band_cols, target_cols;
    std::size_t lat_col = SIZE_MAX, lon_col = SIZE_MAX;

    auto contains = [](const std::vector<std::string>& v, const std::string& s) {
        return std::find(v.begin(), v.end(), s) != v.end();
    };

    for (std::size_t c = 0; c < table.header.size(); ++c) {
        const std::string& name = table.header[c];
        if (contains(schema.ignore_columns, name)) continue;
        const std::string low = lower(name);
        if (low == lower(schema.lat_column)) {
            kinds[c] = Kind::Lat;
            lat_col = c;
            continue;
        }
        if (low == lower(schema.lon_column)) {
            kinds[c] = Kind::Lon;
            lon_col = c;
            continue;
        }
        if (!schema.target_columns.empty()) {
            if (contains(schema.target_columns, name)) {
                kinds[c] = Kind::Target;
                target_cols.push_back(c);
                target_names.push_back(name);
            } else if (auto wl = parse_double(name)) {
                kinds[c] = Kind::Band;
                band_cols.push_back(c);
                wavelengths.push_back(*wl);
            }
            continue;
        }
        if (auto wl = parse_double(name)) {
            kinds[c] = Kind::Band;
            band_cols.push_back(c);
            wavelengths.push_back(*wl);
        } else {
            kinds[c] = Kind::Target;
            target_cols.push_back(c);
            target_names.push_back(name);
        }
    }

    if (band_cols.empty()) throw std::runtime_error("load_library: no wavelength columns");
    for (std::size_t i = 1; i < wavelengths.size(); ++i)
        if (!(wavelengths[i - 1] < wavelengths[i]))
            throw std::runtime_error("load_library: non-monotone wavelength headers");

    const bool has_coords = lat_col != SIZE_MAX && lon_col != SIZE_MAX;
    std::vector<double> spectra_rows, target_rows, coord_rows;
    std::size_t kept = 0, dropped = 0;

    std::vector<double> spec_buf(band_cols.size()), targ_buf(target_cols.size());
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size())
            throw std::runtime_error("load_library: malformed CSV row (field count)");
        bool ok = true;
        double lat = 0.0, lon = 0.0;
        for (std::size_t i = 0; i < band_cols.size() && ok; ++i) {
            auto v = parse_double(row[band_cols[i]]);
            ok = v.has_value() && std::isfinite(*v);
            if (ok) spec_buf[i] = *v;
        }
        for (std::size_t i = 0; i < target_cols.size() && ok; ++i) {
            auto v = parse_double(row[target_cols[i]]);
            ok = v.has_value() && std::isfinite(*v);
            if (ok) targ_buf[i] = *v;
        }
        if (ok && has_coords) {
            auto la = parse_double(row[lat_col]);
            auto lo = parse_double(row[lon_col]);
            ok = la.has_value() && lo.has_value() && std::isfinite(*la) && std::isfinite(*lo);
            if (ok) {
                lat = *la;
                lon = *lo;
            }
        }
        if (!ok) {
            ++dropped;
            continue;
        }
        spectra_rows.insert(spectra_rows.end(), spec_buf.begin(), spec_buf.end());
        target_rows.insert(target_rows.end(), targ_buf.begin(), targ_buf.end());
        if (has_coords) {
            coord_rows.push_back(lat);
            coord_rows.push_back(lon);
        }
        ++kept;
    }

    if (kept == 0) throw std::runtime_error("load_library: zero usable rows in " + path);

    SpectralLibrary lib;
    lib.wavelengths = std::move(wavelengths);
    lib.spectra = Tensor({kept, band_cols.size()});
    lib.spectra.storage() = std::move(spectra_rows);
    lib.targets = Tensor({kept, target_cols.size()});
    lib.targets.storage() = std::move(target_rows);
    lib.variable_names = std::move(target_names);
    if (has_coords) {
        Tensor coords({kept, 2});
        coords.storage() = std::move(coord_rows);
        lib.coords = std::move(coords);
    }
    lib.dropped_rows = dropped;
    lib.validate();
    return lib;
}

void save_library(const SpectralLibrary& lib, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    for (std::size_t b = 0; b < lib.n_bands(); ++b) {
        if (b) out << ',';
        out << shortest(lib.wavelengths[b]);
    }
    for (const auto& name : lib.variable_names) out << ',' << name;
    if (lib.coords) out << ",lat,lon";
    out << '\n';
    for (std::size_t i = 0; i < lib.n_samples(); ++i) {
        auto s = lib.spectrum(i);
        for (std::size_t b = 0; b < s.size(); ++b) {
            if (b) out << ',';
            out << shortest(s[b]);
        }
        for (std::size_t v = 0; v < lib.n_vars(); ++v) out << ',' << shortest(lib.targets(i, v));
        if (lib.coords) out << ',' << shortest((*lib.coords)(i, 0)) << ',' << shortest((*lib.coords)(i, 1));
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::span<const std::size_t> SplitAssignment::subset(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("unknown split: " + name);
}

SplitAssignment stratified_split(const SpectralLibrary& lib, std::array<double, 3> fractions,
                                 std::uint64_t seed, int n_strat_bins) {
    const std::size_t n = lib.n_samples();
    double fsum = fractions[0] + fractions[1] + fractions[2];
    if (fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0 || std::abs(fsum - 1.0) > 1e-9)
        throw std::invalid_argument("stratified_split: fractions must be non-negative and sum to 1");
    if (n_strat_bins < 2) throw std::invalid_argument("stratified_split: n_strat_bins must be >= 2");
    if (n < static_cast<std::size_t>(n_strat_bins))
        throw std::invalid_argument("stratified_split: fewer samples than strat bins");
    for (double& f : fractions) f /= fsum;

    // Pivot variable: most distinct values (joint stratification over all
    // variables is infeasible; the audit checks the rest).
    std::size_t pivot = 0, best_distinct = 0;
    for (std::size_t v = 0; v < lib.n_vars(); ++v) {
        auto col = lib.variable_column(v);
        std::sort(col.begin(), col.end());
        const std::size_t distinct =
            static_cast<std::size_t>(std::unique(col.begin(), col.end()) - col.begin());
        if (distinct > best_distinct) {
            best_distinct = distinct;
            pivot = v;
        }
    }

    const auto pivot_col = lib.variable_column(pivot);
    const auto edges = quantile_edges(pivot_col, n_strat_bins);
    const int n_bins = static_cast<int>(edges.size()) - 1;

    std::vector<std::vector<std::size_t>> bins(static_cast<std::size_t>(n_bins));
    for (std::size_t i = 0; i < n; ++i)
        bins[static_cast<std::size_t>(bin_index(edges, pivot_col[i]))].push_back(i);

    Rng rng(seed);
    SplitAssignment out;
    out.fractions = fractions;
    out.seed = seed;
    out.n_strat_bins = n_strat_bins;

    std::array<std::vector<std::size_t>*, 3> dests = {&out.train, &out.val, &out.test};
    std::array<std::size_t, 3> assigned = {0, 0, 0};
    std::size_t cumulative = 0;

    for (auto& bin : bins) {
        rng.shuffle(bin);
        cumulative += bin.size();

        // Cumulative largest-remainder allocation keeps every split within
        // one sample of fraction * cumulative-count at each step.
        std::array<double, 3> quota{};
        std::array<std::size_t, 3> take{};
        std::size_t base_total = 0;
        for (int s = 0; s < 3; ++s) {
            quota[s] = fractions[s] * static_cast<double>(cumulative) -
                       static_cast<double>(assigned[s]);
            take[s] = static_cast<std::size_t>(std::max(0.0, std::floor(quota[s])));
            base_total += take[s];
        }
        std::array<int, 3> order = {0, 1, 2};
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return quota[a] - std::floor(quota[a]) > quota[b] - std::floor(quota[b]);
        });
        std::size_t leftover = bin.size() - std::min(bin.size(), base_total);
        for (int s : order) {
            if (leftover == 0) break;
            ++take[s];
            --leftover;
        }

        std::size_t pos = 0;
        for (int s = 0; s < 3; ++s) {
            for (std::size_t k = 0; k < take[s] && pos < bin.size(); ++k, ++pos)
                dests[s]->push_back(bin[pos]);
            assigned[s] += take[s];
        }
    }

    for (auto* d : dests) std::sort(d->begin(), d->end());
    return out;
}

void save_split(const SplitAssignment& split, const std::string& path) {
    nlohmann::ordered_json j;
    j["seed"] = split.seed;
    j["fractions"] = split.fractions;
    j["n_strat_bins"] = split.n_strat_bins;
    j["train"] = split.train;
    j["val"] = split.val;
    j["test"] = split.test;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << j.dump(2) << '\n';
}

SplitAssignment load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    SplitAssignment s;
    s.seed = j.value("seed", 0ULL);
    if (j.contains("fractions")) s.fractions = j["fractions"].get<std::array<double, 3>>();
    s.n_strat_bins = j.value("n_strat_bins", 10);
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.val = j.at("val").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
    return s;
}

namespace {
std::pair<double, double> mean_std_pop(std::span<const double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return {mean, std::sqrt(var)};
}
}  // namespace

std::vector<double> standardize_spectrum(std::span<const double> s) {
    std::vector<double> out(s.begin(), s.end());
    standardize_spectrum_inplace(out);
    return out;
}

void standardize_spectrum_inplace(std::span<double> s) {
    if (s.size() < 2) throw std::invalid_argument("standardize_spectrum: needs >= 2 points");
    auto [mean, sd] = mean_std_pop(s);
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean)))
        throw std::invalid_argument("standardize_spectrum: degenerate spectrum");
    for (double& x : s) x = (x - mean) / sd;
}

TargetScaler fit_target_scaler(const Tensor& train_targets) {
    if (train_targets.rank() != 2 || train_targets.dim(0) < 2)
        throw std::invalid_argument("fit_target_scaler: needs >= 2 training rows");
    const std::size_t n = train_targets.dim(0), v = train_targets.dim(1);
    TargetScaler sc;
    sc.mean.resize(v);
    sc.std.resize(v);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < v; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = train_targets(i, j);
        auto [mean, sd] = mean_std_pop(col);
        if (sd <= 1e-12 * std::max(1.0, std::abs(mean)))
            throw std::invalid_argument("fit_target_scaler: zero variance in variable " +
                                        std::to_string(j));
        sc.mean[j] = mean;
        sc.std[j] = sd;
    }
    return sc;
}

TargetScaler fit_target_scaler(const SpectralLibrary& lib, std::span<const std::size_t> train_idx) {
    Tensor sub({train_idx.size(), lib.n_vars()});
    for (std::size_t i = 0; i < train_idx.size(); ++i)
        for (std::size_t j = 0; j < lib.n_vars(); ++j) sub(i, j) = lib.targets(train_idx[i], j);
    return fit_target_scaler(sub);
}

std::vector<double> apply_scaler(const TargetScaler& sc, std::span<const double> values) {
    if (values.size() != sc.mean.size())
        throw std::invalid_argument("apply_scaler: size mismatch");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - sc.mean[i]) / sc.std[i];
    return out;
}

std::vector<double> invert_scaler(const TargetScaler& sc, std::span<const double> values) {
    if (values.size() != sc.mean.size())
        throw std::invalid_argument("invert_scaler: size mismatch");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * sc.std[i] + sc.mean[i];
    return out;
}

std::vector<AuditBlock> quantile_audit(const SpectralLibrary& lib, const SplitAssignment& split,
                                       int n_bins) {
    std::vector<AuditBlock> audit;
    std::vector<std::size_t> all(lib.n_samples());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    struct Named {
        std::string name;
        std::span<const std::size_t> idx;
    };
    const std::vector<Named> sets = {{"full", all},
                                     {"train", split.train},
                                     {"val", split.val},
                                     {"test", split.test}};

    for (std::size_t v = 0; v < lib.n_vars(); ++v) {
        const auto col = lib.variable_column(v);
        const auto edges = quantile_edges(col, n_bins);
        const std::size_t bins = edges.size() - 1;

        AuditBlock block;
        block.variable = lib.variable_names[v];
        for (const auto& s : sets) {
            if (s.idx.empty()) continue;
            AuditRow row;
            row.split_name = s.name;
            std::vector<std::size_t> counts(bins, 0);
            for (std::size_t i : s.idx)
                ++counts[static_cast<std::size_t>(bin_index(edges, col[i]))];
            row.percent.resize(bins);
            for (std::size_t b = 0; b < bins; ++b)
                row.percent[b] = 100.0 * static_cast<double>(counts[b]) /
                                 static_cast<double>(s.idx.size());
            block.rows.push_back(std::move(row));
        }
        audit.push_back(std::move(block));
    }
    return audit;
}

std::string format_audit(const std::vector<AuditBlock>& audit) {
    std::ostringstream os;
    for (const auto& block : audit) {
        os << block.variable << '\n';
        for (const auto& row : block.rows) {
            os << "  " << row.split_name;
            for (std::size_t i = row.split_name.size(); i < 6; ++i) os << ' ';
            for (double p : row.percent) {
                char buf[16];
                std::snprintf(buf, sizeof(buf), " %5.1f", p);
                os << buf;
            }
            os << '\n';
        }
    }
    return os.str();
}

}  // namespace soilspec
