#include "soilspec/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace soilspec {

namespace {
void check_sizes(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("metrics: pred and target sizes differ");
    if (pred.empty()) throw std::invalid_argument("metrics: empty input");
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}
}  // namespace

double mae(std::span<const double> pred, std::span<const double> target) {
    check_sizes(pred, target);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
    return s / static_cast<double>(pred.size());
}

double mse(std::span<const double> pred, std::span<const double> target) {
    check_sizes(pred, target);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> target) {
    return std::sqrt(mse(pred, target));
}

double r2(std::span<const double> pred, std::span<const double> target) {
    check_sizes(pred, target);
    if (pred.size() < 2) throw std::invalid_argument("r2: needs at least 2 samples");
    const double ybar = mean_of(target);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = target[i] - pred[i];
        const double t = target[i] - ybar;
        ss_res += r * r;
        ss_tot += t * t;
    }
    if (ss_tot == 0.0) throw std::invalid_argument("r2: constant target");
    return 1.0 - ss_res / ss_tot;
}

double pearson(std::span<const double> pred, std::span<const double> target) {
    check_sizes(pred, target);
    if (pred.size() < 2) throw std::invalid_argument("pearson: needs at least 2 samples");
    const double xbar = mean_of(pred);
    const double ybar = mean_of(target);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dx = pred[i] - xbar;
        const double dy = target[i] - ybar;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson: zero-variance input");
    return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

double MetricSet::get(const std::string& name) const {
    if (name == "mae") return mae;
    if (name == "mse") return mse;
    if (name == "rmse") return rmse;
    if (name == "r2") return r2;
    if (name == "pearson") return pearson;
    throw std::invalid_argument("unknown metric: " + name);
}

MetricSet compute_metrics(std::span<const double> pred, std::span<const double> target) {
    MetricSet m;
    m.mae = mae(pred, target);
    m.mse = mse(pred, target);
    m.rmse = std::sqrt(m.mse);
    try {
        m.r2 = r2(pred, target);
    } catch (const std::invalid_argument&) {
        m.r2 = 0.0;
    }
    try {
        m.pearson = pearson(pred, target);
    } catch (const std::invalid_argument&) {
        m.pearson = 0.0;
    }
    return m;
}

const std::vector<std::string> kMetricNames = {"mae", "mse", "rmse", "r2", "pearson"};

}  // namespace soilspec
