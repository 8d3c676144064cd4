#pragma once

#include <span>
#include <string>
#include <vector>

namespace soilspec {

double mae(std::span<const double> pred, std::span<const double> target);
double mse(std::span<const double> pred, std::span<const double> target);
double rmse(std::span<const double> pred, std::span<const double> target);

/// Coefficient of determination, 1 - SS_res / SS_tot with SS_tot around the
/// target mean. Equals 0 for the constant target-mean predictor, 1 on a
/// perfect fit, can be arbitrarily negative.
double r2(std::span<const double> pred, std::span<const double> target);

/// Pearson correlation; throws if either side has zero variance.
double pearson(std::span<const double> pred, std::span<const double> target);

struct MetricSet {
    double mae = 0.0;
    double mse = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
    double pearson = 0.0;

    double get(const std::string& name) const;
};

/// All five metrics at once. Pearson on a degenerate input is recorded as 0
/// instead of throwing, so one flat variable cannot poison a whole table.
MetricSet compute_metrics(std::span<const double> pred, std::span<const double> target);

extern const std::vector<std::string> kMetricNames;

}  // namespace soilspec
