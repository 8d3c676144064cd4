#include "soilspec/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace soilspec {

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "l1") return LossKind::L1;
    if (s == "l2") return LossKind::L2;
    if (s == "hybrid") return LossKind::Hybrid;
    throw std::invalid_argument("unknown loss kind: " + s);
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::L1: return "l1";
        case LossKind::L2: return "l2";
        case LossKind::Hybrid: return "hybrid";
    }
    return "?";
}

namespace {
void check_shapes(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("loss: pred and target shapes differ");
    if (pred.numel() == 0) throw std::invalid_argument("loss: empty input");
}
}  // namespace

LossValue l1_loss(const Tensor& pred, const Tensor& target) {
    check_shapes(pred, target);
    const std::size_t n = pred.numel();
    LossValue out;
    out.grad = Tensor(pred.shape());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred[i] - target[i];
        s += std::abs(d);
        out.grad[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / static_cast<double>(n);
    }
    out.value = s / static_cast<double>(n);
    return out;
}

LossValue l2_loss(const Tensor& pred, const Tensor& target) {
    check_shapes(pred, target);
    const std::size_t n = pred.numel();
    LossValue out;
    out.grad = Tensor(pred.shape());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
        out.grad[i] = 2.0 * d / static_cast<double>(n);
    }
    out.value = s / static_cast<double>(n);
    return out;
}

std::vector<double> quantile_edges(std::span<const double> values, int n_bins) {
    if (n_bins < 1) throw std::invalid_argument("quantile_edges: n_bins must be >= 1");
    if (values.empty()) throw std::invalid_argument("quantile_edges: empty input");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();

    std::vector<double> edges;
    edges.reserve(static_cast<std::size_t>(n_bins) + 1);
    for (int i = 0; i <= n_bins; ++i) {
        const double pos = static_cast<double>(n - 1) * static_cast<double>(i) /
                           static_cast<double>(n_bins);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        double e = sorted[lo];
        if (frac > 0.0 && lo + 1 < n) e += frac * (sorted[lo + 1] - sorted[lo]);
        edges.push_back(e);
    }
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    if (edges.size() < 2)
        throw std::invalid_argument("quantile_edges: all values identical");
    return edges;
}

int bin_index(const std::vector<double>& edges, double v) {
    const int n_bins = static_cast<int>(edges.size()) - 1;
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    int idx = static_cast<int>(it - edges.begin()) - 1;
    return std::clamp(idx, 0, n_bins - 1);
}

QuantileCodec QuantileCodec::fit(std::span<const double> values, int n_bins) {
    if (n_bins < 1) throw std::invalid_argument("QuantileCodec: n_bins must be >= 1");
    std::set<double> distinct(values.begin(), values.end());
    if (static_cast<int>(distinct.size()) < n_bins)
        throw std::invalid_argument("QuantileCodec: fewer distinct values than bins");
    QuantileCodec c;
    c.edges_ = quantile_edges(values, n_bins);
    return c;
}

QuantileCodec QuantileCodec::from_edges(std::vector<double> edges) {
    if (edges.size() < 2) throw std::invalid_argument("QuantileCodec: needs >= 2 edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i - 1] < edges[i]))
            throw std::invalid_argument("QuantileCodec: edges not strictly increasing");
    QuantileCodec c;
    c.edges_ = std::move(edges);
    return c;
}

HybridTarget QuantileCodec::encode(double v) const {
    const int c = bin_index(edges_, v);
    const double lo = edges_[static_cast<std::size_t>(c)];
    const double hi = edges_[static_cast<std::size_t>(c) + 1];
    double r = (v - lo) / (hi - lo);
    // Out-of-range values clamp; the top edge maps to the largest offset < 1.
    r = std::clamp(r, 0.0, std::nextafter(1.0, 0.0));
    return {c, r};
}

double QuantileCodec::decode(int bin, double offset) const {
    const int b = std::clamp(bin, 0, n_bins() - 1);
    const double lo = edges_[static_cast<std::size_t>(b)];
    const double hi = edges_[static_cast<std::size_t>(b) + 1];
    return lo + offset * (hi - lo);
}

HybridLossValue hybrid_loss(std::span<const double> logits, double r_pred,
                            const HybridTarget& target, double lambda) {
    const int n = static_cast<int>(logits.size());
    if (n == 0) throw std::invalid_argument("hybrid_loss: empty logits");
    if (target.bin < 0 || target.bin >= n)
        throw std::invalid_argument("hybrid_loss: target bin out of range");

    // Stable softmax cross-entropy.
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) mx = std::max(mx, v);
    double denom = 0.0;
    for (double v : logits) denom += std::exp(v - mx);
    const double log_denom = std::log(denom) + mx;

    HybridLossValue out;
    out.grad_logits.resize(logits.size());
    for (int i = 0; i < n; ++i) {
        const double p = std::exp(logits[static_cast<std::size_t>(i)] - log_denom);
        out.grad_logits[static_cast<std::size_t>(i)] = p - (i == target.bin ? 1.0 : 0.0);
    }
    const double ce = log_denom - logits[static_cast<std::size_t>(target.bin)];

    const double d = r_pred - target.offset;
    out.grad_offset = lambda * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
    out.value = ce + lambda * std::abs(d);
    return out;
}

double hybrid_decode(std::span<const double> logits, double r_pred, const QuantileCodec& codec) {
    if (logits.empty()) throw std::invalid_argument("hybrid_decode: empty logits");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    const double r = std::clamp(r_pred, 0.0, std::nextafter(1.0, 0.0));
    return codec.decode(static_cast<int>(best), r);
}

}  // namespace soilspec
