#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "soilspec/nn.hpp"

namespace soilspec {

/// Structural parameters of one building block: a stride-2 downsampling
/// convolution group followed by n_refine length-preserving refinement groups.
struct BlockSpec {
    std::size_t ch_in = 1;
    std::size_t ch_out = 1;
    int n_refine = 0;
    bool use_norm = true;
    double leak = 0.0;
};

/// Composition parameters of a full network.
struct NetSpec {
    std::size_t n_in = 1024;     // input length, power of two
    std::size_t n_out = 4;       // length before projection, power of two
    int p_min = 4;               // log2 filters of the first block
    int p_max = 7;               // log2 filter cap
    int n_refine = 1;            // refinement groups per block
    bool use_norm = true;
    double leak = 0.2;
    std::size_t proj_hidden = 70;
    std::size_t n_vars = 12;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static NetSpec from_json(const nlohmann::json& j);
};

/// Number of building blocks: floor(log2(n_in / n_out)). Both arguments must
/// be powers of two with n_in > n_out.
int num_blocks(std::size_t n_in, std::size_t n_out);

/// Filter count of the zero-based i-th block: 2^min(i + p_min, p_max).
std::size_t filters_for_block(int i, int p_min, int p_max);

/// Closed-form parameter count of one block:
///   down = 4*ch_in*ch_out + norm*2*ch_out, ref = 3*ch_out^2 + norm*2*ch_out,
///   total = down + n_refine*ref; with_bias adds ch_out per convolution.
std::size_t block_param_count(const BlockSpec& spec, bool with_bias);

/// Field of view of one block, 4 + 3 * n_refine.
int block_fov(int n_refine);

/// Composed field of view, 2 * n_blocks * (4 + 3 * n_refine).
int net_fov(int n_blocks, int n_refine);

/// Exact receptive field from the stride-aware recurrence
/// rf += (k - 1) * jump; jump *= stride, as a diagnostic alongside net_fov.
int exact_receptive_field(int n_blocks, int n_refine);

/// Builds the layer stack: blocks with halving lengths and filters_for_block
/// widths, then flatten -> linear(proj_hidden) [+BN] + activation -> linear
/// head. head_width overrides the final width (used by the hybrid loss head);
/// 0 means n_vars.
nn::Model build_network(const NetSpec& spec, std::uint64_t seed, std::size_t head_width = 0);

std::size_t count_params(const nn::Model& model);

/// Architecture table (stage, operation, output size, parameter subtotal).
std::string summarize(const NetSpec& spec);

}  // namespace soilspec
