#include "resnls/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "resnls/errors.hpp"

namespace resnls {

MetricsReport metrics_from_residuals(std::string name,
                                     std::vector<double> residuals) {
    if (residuals.empty()) {
        throw DataError("cannot compute metrics over zero residuals");
    }
    MetricsReport report;
    report.name = std::move(name);
    report.n_test = residuals.size();
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (double r : residuals) {
        abs_sum += std::abs(r);
        sq_sum += r * r;
    }
    const double n = static_cast<double>(residuals.size());
    report.mae = abs_sum / n;
    report.mse = sq_sum / n;
    report.rmse = std::sqrt(report.mse);
    report.residuals = std::move(residuals);
    return report;
}

MetricsReport evaluate(Model& model, const WindowedDataset& test,
                       std::string name) {
    if (test.size() == 0) {
        throw DataError("cannot evaluate on an empty test set");
    }
    if (test.window_n != model.spec().window_n) {
        throw DimensionError("test windows of length " +
                             std::to_string(test.window_n) +
                             " do not match the model's window_n " +
                             std::to_string(model.spec().window_n));
    }
    auto pred = model.predict(test.inputs);

    // reduce in date order regardless of how the windows arrived
    std::vector<std::size_t> order(test.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return test.dates[a] < test.dates[b];
                     });
    std::vector<double> residuals;
    residuals.reserve(test.size());
    const Normalizer& norm = model.normalizer;
    for (std::size_t i : order) {
        residuals.push_back(norm.inverse(pred->at(i, 0)) -
                            norm.inverse(test.targets->at(i, 0)));
    }
    if (name.empty()) name = architecture_name(model.spec().architecture);
    return metrics_from_residuals(std::move(name), std::move(residuals));
}

std::vector<MetricsReport> compare(std::vector<MetricsReport> reports) {
    if (reports.size() < 2) {
        throw ContractError("compare needs at least two reports, got " +
                            std::to_string(reports.size()));
    }
    std::stable_sort(reports.begin(), reports.end(),
                     [](const MetricsReport& a, const MetricsReport& b) {
                         if (a.rmse != b.rmse) return a.rmse < b.rmse;
                         if (a.mae != b.mae) return a.mae < b.mae;
                         return a.name < b.name;
                     });
    return reports;
}

std::string metrics_table(const std::vector<MetricsReport>& reports) {
    std::size_t width = 5;  // "Model"
    for (const MetricsReport& r : reports) {
        width = std::max(width, r.name.size());
    }
    char line[160];
    std::snprintf(line, sizeof line, "%-*s %10s %12s %10s\n",
                  static_cast<int>(width), "Model", "MAE", "MSE", "RMSE");
    std::string out = line;
    for (const MetricsReport& r : reports) {
        std::snprintf(line, sizeof line, "%-*s %10.2f %12.2f %10.2f\n",
                      static_cast<int>(width), r.name.c_str(), r.mae, r.mse,
                      r.rmse);
        out += line;
    }
    return out;
}

void write_metrics_csv(const std::vector<MetricsReport>& reports,
                       const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw DataError("cannot write metrics to '" + path + "'");
    }
    std::fprintf(f, "model,mae,mse,rmse,n_test\n");
    for (const MetricsReport& r : reports) {
        std::fprintf(f, "%s,%.17g,%.17g,%.17g,%zu\n", r.name.c_str(), r.mae,
                     r.mse, r.rmse, r.n_test);
    }
    std::fclose(f);
}

}  // namespace resnls
