#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "resnls/metrics.hpp"

using namespace resnls;

namespace {

WindowedDataset random_windows(std::size_t rows, std::size_t n,
                               std::uint64_t seed) {
    DetRng rng(seed);
    WindowedDataset ds;
    ds.inputs = tensor({rows, n});
    ds.targets = tensor({rows, 1});
    for (double& v : ds.inputs->data()) v = rng.uniform();
    for (double& v : ds.targets->data()) v = rng.uniform();
    Date d = Date::parse("2021-01-04");
    for (std::size_t i = 0; i < rows; ++i) {
        ds.dates.push_back(d);
        d = d.next_weekday();
    }
    ds.window_n = n;
    return ds;
}

Model priced_model(std::size_t n, double min, double max) {
    ModelSpec spec;
    spec.architecture = Architecture::kRnn;
    spec.window_n = n;
    spec.lstm_hidden = 4;
    Model m = Model::build(spec);
    m.normalizer.min = min;
    m.normalizer.max = max;
    return m;
}

MetricsReport rmse_only(const std::string& name, double rmse) {
    return metrics_from_residuals(name, {rmse});
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("hand fixtures") {
    auto perfect = metrics_from_residuals("perfect", {0.0, 0.0, 0.0});
    CHECK(perfect.mae == 0.0);
    CHECK(perfect.mse == 0.0);
    CHECK(perfect.rmse == 0.0);

    auto r = metrics_from_residuals("pair", {3.0, -4.0});
    CHECK(r.mae == 3.5);
    CHECK(r.mse == 12.5);
    CHECK(r.rmse == doctest::Approx(3.5355339059327378).epsilon(1e-14));
    CHECK(r.n_test == 2);
    CHECK(r.residuals == std::vector<double>{3.0, -4.0});

    CHECK_THROWS_AS(metrics_from_residuals("empty", {}), DataError);
}

TEST_CASE("a perfect predictor scores zero through evaluate") {
    auto ds = random_windows(10, 3, 5);
    Model m = priced_model(3, 2800.0, 3600.0);
    // overwrite the targets with the model's own predictions
    auto pred = m.predict(ds.inputs);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        ds.targets->at(i, 0) = pred->at(i, 0);
    }
    auto report = evaluate(m, ds);
    CHECK(report.mae == 0.0);
    CHECK(report.mse == 0.0);
    CHECK(report.rmse == 0.0);
    CHECK(report.name == "rnn");
    CHECK(report.n_test == 10);
}

TEST_CASE("metrics match a brute-force recomputation of the residual list") {
    auto ds = random_windows(100, 5, 9);
    Model m = priced_model(5, 3000.0, 3500.0);
    auto report = evaluate(m, ds, "probe");
    REQUIRE(report.residuals.size() == 100);

    double abs_sum = 0.0, sq_sum = 0.0;
    for (double r : report.residuals) {
        abs_sum += std::abs(r);
        sq_sum += r * r;
    }
    CHECK(report.mae == doctest::Approx(abs_sum / 100.0).epsilon(1e-12));
    CHECK(report.mse == doctest::Approx(sq_sum / 100.0).epsilon(1e-12));
    CHECK(report.rmse ==
          doctest::Approx(std::sqrt(sq_sum / 100.0)).epsilon(1e-12));

    CHECK(report.mae <= report.rmse);
    CHECK(report.rmse * report.rmse ==
          doctest::Approx(report.mse).epsilon(1e-12));
    CHECK(report.mae >= 0.0);

    // residuals really are prediction - actual on the price scale
    auto pred = m.predict(ds.inputs);
    const double want0 = m.normalizer.inverse(pred->at(0, 0)) -
                         m.normalizer.inverse(ds.targets->at(0, 0));
    CHECK(report.residuals[0] == want0);
}

TEST_CASE("permuting the windows changes nothing") {
    auto ds = random_windows(40, 4, 21);
    Model m = priced_model(4, 100.0, 200.0);
    auto base = evaluate(m, ds);

    // rotate the rows so the dates arrive out of order
    WindowedDataset shuffled;
    shuffled.window_n = ds.window_n;
    shuffled.inputs = tensor({40, 4});
    shuffled.targets = tensor({40, 1});
    for (std::size_t i = 0; i < 40; ++i) {
        const std::size_t src = (i + 17) % 40;
        for (std::size_t j = 0; j < 4; ++j) {
            shuffled.inputs->at(i, j) = ds.inputs->at(src, j);
        }
        shuffled.targets->at(i, 0) = ds.targets->at(src, 0);
        shuffled.dates.push_back(ds.dates[src]);
    }
    auto moved = evaluate(m, shuffled);
    CHECK(moved.mae == base.mae);
    CHECK(moved.mse == base.mse);
    CHECK(moved.rmse == base.rmse);
    CHECK(moved.residuals == base.residuals);
}

TEST_CASE("denormalized errors are the normalized ones scaled by the range") {
    auto ds = random_windows(60, 5, 33);
    const double min = 2800.0, max = 3600.0;
    Model m = priced_model(5, min, max);
    auto report = evaluate(m, ds);

    auto pred = m.predict(ds.inputs);
    std::vector<double> norm_res;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        norm_res.push_back(pred->at(i, 0) - ds.targets->at(i, 0));
    }
    auto norm_report = metrics_from_residuals("norm", norm_res);
    const double span = max - min;
    CHECK(norm_report.mae * span == doctest::Approx(report.mae).epsilon(1e-9));
    CHECK(norm_report.rmse * span ==
          doctest::Approx(report.rmse).epsilon(1e-9));
}

TEST_CASE("evaluate rejects bad inputs") {
    Model m = priced_model(5, 0.0, 1.0);
    WindowedDataset empty;
    empty.window_n = 5;
    CHECK_THROWS_AS(evaluate(m, empty), DataError);
    CHECK_THROWS_AS(evaluate(m, random_windows(4, 3, 1)), DimensionError);
}

TEST_CASE("ranking sorts by rmse with documented tie-breaks") {
    auto sorted = compare({rmse_only("lstm", 57.63), rmse_only("resnls-5", 36.74)});
    CHECK(sorted[0].name == "resnls-5");
    CHECK(sorted[1].name == "lstm");

    CHECK_THROWS_AS(compare({rmse_only("alone", 1.0)}), ContractError);
    CHECK_THROWS_AS(compare({}), ContractError);

    // same rmse, different mae: mae decides
    auto a = metrics_from_residuals("spread", {5.0, -5.0});   // mae 5, rmse 5
    auto b = metrics_from_residuals("uneven", {7.0, 1.0});    // mae 4, rmse 5
    b.rmse = a.rmse;  // force the tie exactly
    b.mse = a.mse;
    auto tied = compare({a, b});
    CHECK(tied[0].name == "uneven");

    // full tie: names in ascending order
    auto c1 = metrics_from_residuals("zeta", {2.0});
    auto c2 = metrics_from_residuals("alpha", {2.0});
    auto by_name = compare({c1, c2});
    CHECK(by_name[0].name == "alpha");
    CHECK(by_name[1].name == "zeta");
}

TEST_CASE("table and csv output") {
    auto reports = compare({rmse_only("lstm", 57.63), rmse_only("resnls-5", 36.74)});
    const std::string table = metrics_table(reports);
    CHECK(table.find("Model") != std::string::npos);
    CHECK(table.find("RMSE") != std::string::npos);
    CHECK(table.find("resnls-5") < table.find("lstm"));
    CHECK(table.find("36.74") != std::string::npos);

    const std::string path = "metrics_csv_test.csv";
    write_metrics_csv(reports, path);
    std::ifstream in(path);
    REQUIRE(bool(in));
    std::string line;
    std::getline(in, line);
    CHECK(line == "model,mae,mse,rmse,n_test");
    std::getline(in, line);
    CHECK(line.rfind("resnls-5,", 0) == 0);
    CHECK(line.find(",1") != std::string::npos);  // n_test column
    std::remove(path.c_str());
}

}  // TEST_SUITE
