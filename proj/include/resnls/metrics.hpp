#pragma once

#include <string>
#include <vector>

#include "resnls/data.hpp"
#include "resnls/model.hpp"

namespace resnls {

// Forecast errors in index points (denormalized). mse is in squared points.
struct MetricsReport {
    std::string name;
    double mae = 0.0;
    double mse = 0.0;
    double rmse = 0.0;
    std::size_t n_test = 0;
    std::vector<double> residuals;  // prediction - actual, in date order
};

// Aggregates a residual list into a report. The residual order is preserved.
MetricsReport metrics_from_residuals(std::string name,
                                     std::vector<double> residuals);

// Eval-mode predictions on the test set, denormalized through the model's
// normalizer, reduced in date order so the result is bitwise stable under
// any permutation of the windows. Empty name defaults to the architecture.
MetricsReport evaluate(Model& model, const WindowedDataset& test,
                       std::string name = "");

// Ranking ascending by rmse; ties break by mae, then by name.
std::vector<MetricsReport> compare(std::vector<MetricsReport> reports);

// Aligned text table over the given (already ordered) reports.
std::string metrics_table(const std::vector<MetricsReport>& reports);

// `model,mae,mse,rmse,n_test` rows.
void write_metrics_csv(const std::vector<MetricsReport>& reports,
                       const std::string& path);

}  // namespace resnls
