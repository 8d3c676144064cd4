#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "soilspec/tensor.hpp"

namespace soilspec {

enum class LossKind { L1, L2, Hybrid };

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);

struct LossValue {
    double value = 0.0;
    Tensor grad;  // d(loss)/d(pred), same shape as pred
};

/// Mean absolute deviation over all elements, with gradient.
LossValue l1_loss(const Tensor& pred, const Tensor& target);
/// Mean squared deviation over all elements, with gradient.
LossValue l2_loss(const Tensor& pred, const Tensor& target);

struct HybridTarget {
    int bin = 0;          // quantile bin index c
    double offset = 0.0;  // within-bin offset r in [0, 1)
};

/// Equal-mass quantile binning of target values. A value v decomposes into a
/// bin index c and an offset r so that decode(c, r) reproduces v; out-of-range
/// values clamp into the first/last bin.
class QuantileCodec {
public:
    QuantileCodec() = default;

    /// Edges at the B+1 equal-mass quantiles of `values`; duplicated edges
    /// (heavily repeated data) collapse, so the effective bin count may be
    /// smaller than requested. Throws if fewer than `n_bins` distinct values.
    static QuantileCodec fit(std::span<const double> values, int n_bins);

    static QuantileCodec from_edges(std::vector<double> edges);

    HybridTarget encode(double v) const;
    double decode(int bin, double offset) const;
    double decode(const HybridTarget& t) const { return decode(t.bin, t.offset); }

    int n_bins() const { return static_cast<int>(edges_.size()) - 1; }
    const std::vector<double>& edges() const { return edges_; }

private:
    std::vector<double> edges_;
};

/// Quantile edges helper shared with the stratified-split audit: B+1 edges by
/// linear-interpolation quantiles, consecutive duplicates collapsed.
std::vector<double> quantile_edges(std::span<const double> values, int n_bins);

/// Index of the bin holding v given sorted edges (clamped to [0, bins-1]).
int bin_index(const std::vector<double>& edges, double v);

struct HybridLossValue {
    double value = 0.0;
    std::vector<double> grad_logits;  // d/d logits
    double grad_offset = 0.0;         // d/d r_pred
};

/// Cross-entropy on the bin logits plus lambda * |r_pred - r|.
HybridLossValue hybrid_loss(std::span<const double> logits, double r_pred,
                            const HybridTarget& target, double lambda = 1.0);

/// Inference-side decode: argmax bin + clamped offset through the codec.
double hybrid_decode(std::span<const double> logits, double r_pred, const QuantileCodec& codec);

}  // namespace soilspec
