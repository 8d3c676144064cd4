#include "soilspec/arch.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "soilspec/resample.hpp"

namespace soilspec {

void NetSpec::validate() const {
    if (!is_power_of_two(n_in) || !is_power_of_two(n_out))
        throw std::invalid_argument("NetSpec: n_in and n_out must be powers of 2");
    if (n_in <= n_out) throw std::invalid_argument("NetSpec: n_in must exceed n_out");
    if (p_min < 0 || p_max < p_min)
        throw std::invalid_argument("NetSpec: require 0 <= p_min <= p_max");
    if (n_refine < 0) throw std::invalid_argument("NetSpec: n_refine must be >= 0");
    if (leak < 0.0 || leak >= 1.0) throw std::invalid_argument("NetSpec: leak must be in [0, 1)");
    if (proj_hidden == 0 || n_vars == 0)
        throw std::invalid_argument("NetSpec: proj_hidden and n_vars must be >= 1");
}

nlohmann::ordered_json NetSpec::to_json() const {
    nlohmann::ordered_json j;
    j["n_in"] = n_in;
    j["n_out"] = n_out;
    j["p_min"] = p_min;
    j["p_max"] = p_max;
    j["n_refine"] = n_refine;
    j["use_norm"] = use_norm;
    j["leak"] = leak;
    j["proj_hidden"] = proj_hidden;
    j["n_vars"] = n_vars;
    return j;
}

NetSpec NetSpec::from_json(const nlohmann::json& j) {
    NetSpec s;
    s.n_in = j.at("n_in").get<std::size_t>();
    s.n_out = j.at("n_out").get<std::size_t>();
    s.p_min = j.value("p_min", 4);
    s.p_max = j.value("p_max", 7);
    s.n_refine = j.value("n_refine", 1);
    s.use_norm = j.value("use_norm", true);
    s.leak = j.value("leak", 0.2);
    s.proj_hidden = j.value("proj_hidden", 70ULL);
    s.n_vars = j.value("n_vars", 12ULL);
    s.validate();
    return s;
}

int num_blocks(std::size_t n_in, std::size_t n_out) {
    if (!is_power_of_two(n_in) || !is_power_of_two(n_out))
        throw std::invalid_argument("num_blocks: arguments must be a power of 2");
    if (n_in <= n_out) throw std::invalid_argument("num_blocks: n_in must exceed n_out");
    int n = 0;
    for (std::size_t r = n_in / n_out; r > 1; r >>= 1) ++n;
    return n;
}

std::size_t filters_for_block(int i, int p_min, int p_max) {
    if (i < 0) throw std::invalid_argument("filters_for_block: index must be >= 0");
    const int e = std::min(i + p_min, p_max);
    return std::size_t{1} << e;
}

std::size_t block_param_count(const BlockSpec& spec, bool with_bias) {
    const std::size_t norm = spec.use_norm ? 1 : 0;
    std::size_t down = 4 * spec.ch_in * spec.ch_out + norm * 2 * spec.ch_out;
    std::size_t ref = 3 * spec.ch_out * spec.ch_out + norm * 2 * spec.ch_out;
    if (with_bias) {
        down += spec.ch_out;
        ref += spec.ch_out;
    }
    return down + static_cast<std::size_t>(spec.n_refine) * ref;
}

int block_fov(int n_refine) {
    if (n_refine < 0) throw std::invalid_argument("block_fov: n_refine must be >= 0");
    return 4 + n_refine * 3;
}

int net_fov(int n_blocks, int n_refine) {
    return 2 * n_blocks * block_fov(n_refine);
}

int exact_receptive_field(int n_blocks, int n_refine) {
    if (n_blocks < 0 || n_refine < 0)
        throw std::invalid_argument("exact_receptive_field: negative argument");
    long long rf = 1, jump = 1;
    for (int b = 0; b < n_blocks; ++b) {
        rf += 3 * jump;  // kernel 4
        jump *= 2;
        for (int r = 0; r < n_refine; ++r) rf += 2 * jump;  // kernel 3
    }
    return static_cast<int>(rf);
}

nn::Model build_network(const NetSpec& spec, std::uint64_t seed, std::size_t head_width) {
    spec.validate();
    const int nb = num_blocks(spec.n_in, spec.n_out);
    const std::size_t out_width = head_width == 0 ? spec.n_vars : head_width;

    nn::Model model;
    model.seed = seed;
    model.stages.push_back({"Pre-processing", "Input", 1, spec.n_in, 0});

    std::size_t ch_in = 1;
    std::size_t length = spec.n_in;
    for (int i = 0; i < nb; ++i) {
        const std::size_t ch_out = filters_for_block(i, spec.p_min, spec.p_max);
        const std::string base = "block" + std::to_string(i + 1);
        model.add(std::make_unique<nn::Conv1d>(base + ".down", ch_in, ch_out, 4, 2, 1));
        if (spec.use_norm) model.add(std::make_unique<nn::BatchNorm1d>(base + ".down.bn", ch_out));
        model.add(std::make_unique<nn::LeakyReLU>(spec.leak));
        for (int r = 0; r < spec.n_refine; ++r) {
            const std::string ref = base + ".ref" + std::to_string(r + 1);
            model.add(std::make_unique<nn::Conv1d>(ref, ch_out, ch_out, 3, 1, 1));
            if (spec.use_norm) model.add(std::make_unique<nn::BatchNorm1d>(ref + ".bn", ch_out));
            model.add(std::make_unique<nn::LeakyReLU>(spec.leak));
        }
        model.mark_block_end();

        length /= 2;
        const BlockSpec bs{ch_in, ch_out, spec.n_refine, spec.use_norm, spec.leak};
        model.stages.push_back({i == 0 ? "Encoding" : "", "Block " + std::to_string(i + 1),
                                ch_out, length, block_param_count(bs, true)});
        ch_in = ch_out;
    }
    if (length != spec.n_out)
        throw std::invalid_argument("build_network: block chain does not reach n_out");

    const std::size_t flat = ch_in * spec.n_out;
    model.add(std::make_unique<nn::Flatten>());
    model.add(std::make_unique<nn::Linear>("proj.hidden", flat, spec.proj_hidden));
    std::size_t proj_params = flat * spec.proj_hidden + spec.proj_hidden;
    if (spec.use_norm) {
        model.add(std::make_unique<nn::BatchNorm1d>("proj.bn", spec.proj_hidden));
        proj_params += 2 * spec.proj_hidden;
    }
    model.add(std::make_unique<nn::LeakyReLU>(spec.leak));
    model.stages.push_back({"Projection", spec.use_norm ? "Linear+BN+LReLU" : "Linear+LReLU",
                            spec.proj_hidden, 0, proj_params});

    model.add(std::make_unique<nn::Linear>("proj.out", spec.proj_hidden, out_width));
    model.stages.push_back(
        {"", "Linear", out_width, 0, spec.proj_hidden * out_width + out_width});

    Rng rng(seed);
    for (std::size_t i = 0; i < model.n_layers(); ++i)
        model.layer(i).init_params(rng, spec.leak);
    return model;
}

std::size_t count_params(const nn::Model& model) { return model.count_params(); }

std::string summarize(const NetSpec& spec) {
    nn::Model model = build_network(spec, 0);
    std::ostringstream os;
    os << "Stage            Operation          Output size      Params\n";
    os << "-----            ---------          -----------      ------\n";
    std::size_t total = 0;
    for (const auto& s : model.stages) {
        std::string size = s.length > 0 ? std::to_string(s.channels) + " x " + std::to_string(s.length)
                                        : std::to_string(s.channels);
        char line[128];
        std::snprintf(line, sizeof(line), "%-16s %-18s %-16s %zu\n", s.stage.c_str(),
                      s.operation.c_str(), size.c_str(), s.params);
        os << line;
        total += s.params;
    }
    os << "\nTotal parameters: " << total << " (walked: " << model.count_params() << ")\n";
    os << "Blocks: " << model.n_blocks() << "  FOV: "
       << net_fov(static_cast<int>(model.n_blocks()), spec.n_refine)
       << "  exact receptive field: "
       << exact_receptive_field(static_cast<int>(model.n_blocks()), spec.n_refine) << "\n";
    return os.str();
}

}  // namespace soilspec
