// Command-line front end: train/evaluate/sweep/backtest/gradcheck/synth over
// the forecasting library, emitting CSV tables, SVG charts and a JSON run
// manifest per command.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "resnls/backtest.hpp"
#include "resnls/data.hpp"
#include "resnls/errors.hpp"
#include "resnls/gradcheck.hpp"
#include "resnls/gradsuite.hpp"
#include "resnls/metrics.hpp"
#include "resnls/model.hpp"
#include "resnls/svg.hpp"
#include "resnls/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace resnls;

namespace {

constexpr const char* kToolName = "resnls";
constexpr const char* kToolVersion = "0.1.0";

// Bundled fixture: a decade of weekday rows, fixed seed, covering the
// default 2011..2020 date ranges below.
constexpr std::size_t kSyntheticDays = 2600;
constexpr std::uint64_t kSyntheticSeed = 2011;

struct RunConfig {
    // data
    std::string data_path;  // empty -> bundled synthetic series
    std::string instrument = "synthetic";
    std::string train_first = "2011-01-01";
    std::string train_last = "2019-12-31";
    std::string test_first = "2020-01-01";
    std::string test_last = "2020-12-31";
    // model
    std::string arch = "resnls";
    std::size_t window_n = 5;
    std::size_t conv_filters = 64;
    std::size_t kernel_size = 3;
    std::size_t lstm_hidden = 32;
    double dropout_keep = 0.8;
    bool bn_after_each_conv = false;
    std::uint64_t init_seed = 1;
    // training
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 50;
    double weight_decay = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t shuffle_seed = 1;
    // backtest
    double threshold = 0.01;
    double initial_cash = 1'000'000.0;
    std::string execution = "next_open";
    // output
    std::string out_dir = "out";
};

ModelSpec model_spec(const RunConfig& c) {
    ModelSpec spec;
    spec.architecture = architecture_from_name(c.arch);
    spec.window_n = c.window_n;
    spec.conv_filters = c.conv_filters;
    spec.kernel_size = c.kernel_size;
    spec.lstm_hidden = c.lstm_hidden;
    spec.dropout_keep = c.dropout_keep;
    spec.bn_after_each_conv = c.bn_after_each_conv;
    spec.init_seed = c.init_seed;
    return spec;
}

TrainConfig train_config(const RunConfig& c) {
    TrainConfig t;
    t.learning_rate = c.learning_rate;
    t.batch_size = c.batch_size;
    t.epochs = c.epochs;
    t.weight_decay = c.weight_decay;
    t.adam_beta1 = c.adam_beta1;
    t.adam_beta2 = c.adam_beta2;
    t.adam_eps = c.adam_eps;
    t.shuffle_seed = c.shuffle_seed;
    return t;
}

StrategyConfig strategy_config(const RunConfig& c) {
    StrategyConfig s;
    s.threshold = c.threshold;
    s.initial_cash = c.initial_cash;
    if (c.execution == "next_open") {
        s.execution_price = ExecutionPrice::kNextOpen;
    } else if (c.execution == "next_close") {
        s.execution_price = ExecutionPrice::kNextClose;
    } else {
        throw ConfigError("execution must be next_open or next_close, got '" +
                          c.execution + "'");
    }
    return s;
}

DateRange parse_range(const std::string& first, const std::string& last,
                      const char* which) {
    DateRange r{Date::parse(first), Date::parse(last)};
    if (!(r.first <= r.last)) {
        throw ConfigError(std::string(which) + " range is reversed: " + first +
                          " .. " + last);
    }
    return r;
}

void validate(const RunConfig& c) {
    if (!c.data_path.empty() && !fs::exists(c.data_path)) {
        throw ConfigError("data file '" + c.data_path + "' does not exist");
    }
    parse_range(c.train_first, c.train_last, "train");
    parse_range(c.test_first, c.test_last, "test");
    model_spec(c).validate();
    train_config(c).validate();
    strategy_config(c).validate();
    if (c.out_dir.empty()) {
        throw ConfigError("output directory must not be empty");
    }
}

PriceSeries load_series(const RunConfig& c) {
    if (c.data_path.empty()) {
        return synthetic_series(kSyntheticDays, kSyntheticSeed);
    }
    return ingest_csv(c.data_path, c.instrument);
}

json config_json(const RunConfig& c) {
    return json{{"data", c.data_path},
                {"instrument", c.instrument},
                {"train-first", c.train_first},
                {"train-last", c.train_last},
                {"test-first", c.test_first},
                {"test-last", c.test_last},
                {"arch", c.arch},
                {"window-n", c.window_n},
                {"conv-filters", c.conv_filters},
                {"kernel-size", c.kernel_size},
                {"lstm-hidden", c.lstm_hidden},
                {"dropout-keep", c.dropout_keep},
                {"bn-after-each-conv", c.bn_after_each_conv},
                {"init-seed", c.init_seed},
                {"learning-rate", c.learning_rate},
                {"batch-size", c.batch_size},
                {"epochs", c.epochs},
                {"weight-decay", c.weight_decay},
                {"adam-beta1", c.adam_beta1},
                {"adam-beta2", c.adam_beta2},
                {"adam-eps", c.adam_eps},
                {"shuffle-seed", c.shuffle_seed},
                {"threshold", c.threshold},
                {"initial-cash", c.initial_cash},
                {"execution", c.execution},
                {"out", c.out_dir}};
}

std::uint64_t file_fnv1a(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot checksum '" + path + "'");
    }
    std::uint64_t hash = 14695981039346656037ULL;
    char buf[65536];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 1099511628211ULL;
        }
    }
    return hash;
}

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

// Tracks artifacts and timings for the manifest written at command end.
class ManifestWriter {
  public:
    ManifestWriter(std::string command, const RunConfig& config)
        : command_(std::move(command)), config_(config_json(config)) {}

    void add_artifact(const std::string& path) { artifacts_.push_back(path); }
    void add_timing(const std::string& phase, double seconds) {
        timings_[phase] = seconds;
    }
    void add_result(const std::string& key, const json& value) {
        results_[key] = value;
    }

    void write(const std::string& path) const {
        json artifacts = json::array();
        for (const std::string& p : artifacts_) {
            artifacts.push_back(json{{"path", p},
                                     {"bytes", fs::file_size(p)},
                                     {"fnv1a64", hex64(file_fnv1a(p))}});
        }
        json manifest{{"tool", {{"name", kToolName}, {"version", kToolVersion}}},
                      {"command", command_},
                      {"config", config_},
                      {"timings_s", timings_},
                      {"results", results_},
                      {"artifacts", artifacts}};
        std::ofstream out(path);
        if (!out) {
            throw DataError("cannot write manifest to '" + path + "'");
        }
        out << manifest.dump(2) << "\n";
    }

  private:
    std::string command_;
    json config_;
    json timings_ = json::object();
    json results_ = json::object();
    std::vector<std::string> artifacts_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void write_loss_curve_svg(const LossCurve& curve, const std::string& path,
                          const std::string& title) {
    ChartSeries tr{"train", "", {}, {}};
    ChartSeries te{"test", "", {}, {}};
    tr.xs.push_back(0.0);
    tr.ys.push_back(curve.initial_train_mse);
    te.xs.push_back(0.0);
    te.ys.push_back(curve.initial_test_mse);
    for (std::size_t i = 0; i < curve.train_mse.size(); ++i) {
        tr.xs.push_back(static_cast<double>(i + 1));
        tr.ys.push_back(curve.train_mse[i]);
        te.xs.push_back(static_cast<double>(i + 1));
        te.ys.push_back(curve.test_mse[i]);
    }
    write_line_chart(path, title, "epoch", "mse (normalized)", {tr, te});
}

struct PreparedData {
    PriceSeries series;
    SplitResult split;
};

PreparedData prepare(const RunConfig& c, std::size_t window_n) {
    PreparedData d;
    d.series = load_series(c);
    d.split = split(d.series, PriceField::kClose, window_n,
                    parse_range(c.train_first, c.train_last, "train"),
                    parse_range(c.test_first, c.test_last, "test"));
    return d;
}

// Trains one model on the configured split; shared by train and sweep.
struct TrainOutcome {
    Model model;
    LossCurve curve;
};

TrainOutcome train_once(const RunConfig& c, const PreparedData& d) {
    Model model = Model::build(model_spec(c));
    model.normalizer = d.split.normalizer;
    LossCurve curve = train(model, d.split.train, d.split.test, train_config(c));
    return {std::move(model), std::move(curve)};
}

int cmd_train(const RunConfig& c) {
    validate(c);
    fs::create_directories(c.out_dir);
    ManifestWriter manifest("train", c);

    auto t0 = std::chrono::steady_clock::now();
    PreparedData d = prepare(c, c.window_n);
    manifest.add_timing("prepare", seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    TrainOutcome out = train_once(c, d);
    manifest.add_timing("train", seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    const std::string model_path = join_path(c.out_dir, "model.bin");
    const std::string curve_csv = join_path(c.out_dir, "loss_curve.csv");
    const std::string curve_svg = join_path(c.out_dir, "loss_curve.svg");
    out.model.save(model_path);
    out.curve.write_csv(curve_csv);
    write_loss_curve_svg(out.curve, curve_svg,
                         c.arch + "-" + std::to_string(c.window_n) +
                             " prediction loss");
    manifest.add_timing("artifacts", seconds_since(t0));

    manifest.add_artifact(model_path);
    manifest.add_artifact(curve_csv);
    manifest.add_artifact(curve_svg);
    manifest.add_result("model_checksum",
                        hex64(out.model.parameter_checksum()));
    manifest.add_result("initial_test_mse", out.curve.initial_test_mse);
    manifest.add_result("final_train_mse", out.curve.train_mse.back());
    manifest.add_result("final_test_mse", out.curve.test_mse.back());
    manifest.add_result("train_windows", d.split.train.size());
    manifest.add_result("test_windows", d.split.test.size());
    manifest.write(join_path(c.out_dir, "manifest.json"));

    std::printf("trained %s-%zu for %zu epochs: test mse %.6g -> %.6g\n",
                c.arch.c_str(), c.window_n, c.epochs,
                out.curve.initial_test_mse, out.curve.test_mse.back());
    return 0;
}

Model load_model_checked(const RunConfig& c, const std::string& model_path) {
    if (!fs::exists(model_path)) {
        throw ConfigError("model file '" + model_path + "' does not exist");
    }
    Model model = Model::load(model_path);
    const DateRange train_r = parse_range(c.train_first, c.train_last, "train");
    if (model.normalizer.fitted_first != train_r.first ||
        model.normalizer.fitted_last != train_r.last) {
        throw ConfigError(
            "model was normalized on " + model.normalizer.fitted_first.str() +
            " .. " + model.normalizer.fitted_last.str() +
            " but the config trains on " + c.train_first + " .. " +
            c.train_last + "; refusing to mix them");
    }
    return model;
}

int cmd_evaluate(const RunConfig& c, const std::string& model_path) {
    validate(c);
    fs::create_directories(c.out_dir);
    ManifestWriter manifest("evaluate", c);

    auto t0 = std::chrono::steady_clock::now();
    Model model = load_model_checked(c, model_path);
    PreparedData d = prepare(c, model.spec().window_n);
    manifest.add_timing("prepare", seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    const WindowedDataset& test = d.split.test;
    auto pred = model.predict(test.inputs);
    MetricsReport report = evaluate(model, test);
    manifest.add_timing("evaluate", seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    const std::string pred_csv = join_path(c.out_dir, "predictions.csv");
    {
        std::FILE* f = std::fopen(pred_csv.c_str(), "w");
        if (!f) throw DataError("cannot write '" + pred_csv + "'");
        std::fprintf(f, "date,actual,predicted\n");
        for (std::size_t i = 0; i < test.size(); ++i) {
            std::fprintf(f, "%s,%.10g,%.10g\n", test.dates[i].str().c_str(),
                         model.normalizer.inverse(test.targets->at(i, 0)),
                         model.normalizer.inverse(pred->at(i, 0)));
        }
        std::fclose(f);
    }
    const std::string metrics_csv = join_path(c.out_dir, "metrics.csv");
    write_metrics_csv({report}, metrics_csv);

    // overlay: the tail of the train range, then actual vs predicted test
    const std::string overlay_svg = join_path(c.out_dir, "overlay.svg");
    {
        const auto& rows = d.series.rows;
        const DateRange train_r =
            parse_range(c.train_first, c.train_last, "train");
        std::vector<double> tail;
        for (const PriceRow& row : rows) {
            if (train_r.contains(row.date)) tail.push_back(row.close);
        }
        const std::size_t keep = std::min<std::size_t>(tail.size(), 60);
        ChartSeries st{"train tail", "#7f7f7f", {}, {}};
        for (std::size_t i = tail.size() - keep; i < tail.size(); ++i) {
            st.xs.push_back(static_cast<double>(st.xs.size()));
            st.ys.push_back(tail[i]);
        }
        ChartSeries sa{"actual", "#1f77b4", {}, {}};
        ChartSeries sp{"predicted", "#d62728", {}, {}};
        for (std::size_t i = 0; i < test.size(); ++i) {
            const double x = static_cast<double>(keep + i);
            sa.xs.push_back(x);
            sa.ys.push_back(model.normalizer.inverse(test.targets->at(i, 0)));
            sp.xs.push_back(x);
            sp.ys.push_back(model.normalizer.inverse(pred->at(i, 0)));
        }
        write_line_chart(overlay_svg,
                         c.instrument + " actual vs predicted close",
                         "trading day", "close", {st, sa, sp});
    }
    manifest.add_timing("artifacts", seconds_since(t0));

    manifest.add_artifact(pred_csv);
    manifest.add_artifact(metrics_csv);
    manifest.add_artifact(overlay_svg);
    manifest.add_result("mae", report.mae);
    manifest.add_result("mse", report.mse);
    manifest.add_result("rmse", report.rmse);
    manifest.add_result("n_test", report.n_test);
    manifest.write(join_path(c.out_dir, "manifest.json"));

    std::printf("%s", metrics_table({report}).c_str());
    return 0;
}

int cmd_sweep(const RunConfig& base, std::vector<std::size_t> n_list,
              std::size_t jobs) {
    validate(base);
    if (n_list.empty()) {
        throw ConfigError("sweep needs at least one window length");
    }
    std::sort(n_list.begin(), n_list.end());
    n_list.erase(std::unique(n_list.begin(), n_list.end()), n_list.end());
    fs::create_directories(base.out_dir);
    ManifestWriter manifest("sweep", base);

    auto t0 = std::chrono::steady_clock::now();
    struct PerN {
        std::size_t n = 0;
        LossCurve curve;
        MetricsReport report;
        std::string error;
    };
    std::vector<PerN> results(n_list.size());

    // one worker per window length, derived deterministic seeds
    std::mutex next_mutex;
    std::size_t next = 0;
    auto worker = [&]() {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(next_mutex);
                if (next >= n_list.size()) return;
                i = next++;
            }
            PerN& slot = results[i];
            slot.n = n_list[i];
            try {
                RunConfig c = base;
                c.window_n = n_list[i];
                c.init_seed = base.init_seed ^ n_list[i];
                c.shuffle_seed = base.shuffle_seed ^ n_list[i];
                PreparedData d = prepare(c, c.window_n);
                TrainOutcome out = train_once(c, d);
                slot.curve = out.curve;
                slot.report = evaluate(out.model, d.split.test,
                                       c.arch + "-" + std::to_string(c.window_n));
            } catch (const std::exception& e) {
                slot.error = e.what();
            }
        }
    };
    if (jobs < 1) jobs = 1;
    jobs = std::min(jobs, n_list.size());
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    manifest.add_timing("train_all", seconds_since(t0));

    const PerN* failed = nullptr;
    for (const PerN& r : results) {
        if (!r.error.empty() && failed == nullptr) failed = &r;
    }

    t0 = std::chrono::steady_clock::now();
    // completed window lengths keep their loss curves even when another n
    // failed; the summary table is only written for a complete sweep
    for (const PerN& r : results) {
        if (!r.error.empty()) continue;
        const std::string tag = "loss_curve_n" + std::to_string(r.n);
        const std::string csv = join_path(base.out_dir, tag + ".csv");
        const std::string svg = join_path(base.out_dir, tag + ".svg");
        r.curve.write_csv(csv);
        write_loss_curve_svg(r.curve, svg,
                             base.arch + "-" + std::to_string(r.n) +
                                 " prediction loss");
        manifest.add_artifact(csv);
        manifest.add_artifact(svg);
        manifest.add_result("rmse_n" + std::to_string(r.n), r.report.rmse);
    }
    if (failed == nullptr) {
        const std::string sweep_csv = join_path(base.out_dir, "sweep.csv");
        std::FILE* f = std::fopen(sweep_csv.c_str(), "w");
        if (!f) throw DataError("cannot write '" + sweep_csv + "'");
        std::fprintf(f, "n,mae,mse,rmse\n");
        for (const PerN& r : results) {
            std::fprintf(f, "%zu,%.17g,%.17g,%.17g\n", r.n, r.report.mae,
                         r.report.mse, r.report.rmse);
        }
        std::fclose(f);
        manifest.add_artifact(sweep_csv);
    } else {
        manifest.add_result("partial", true);
        manifest.add_result("failed_n", failed->n);
        manifest.add_result("failure", failed->error);
    }
    manifest.add_timing("artifacts", seconds_since(t0));
    manifest.write(join_path(base.out_dir, "manifest.json"));

    if (failed != nullptr) {
        throw DataError("sweep aborted: window " + std::to_string(failed->n) +
                        " failed (" + failed->error + ")");
    }
    std::vector<MetricsReport> table;
    for (const PerN& r : results) table.push_back(r.report);
    std::printf("%s", metrics_table(table).c_str());
    return 0;
}

int cmd_backtest(const RunConfig& c, const std::string& model_path) {
    validate(c);
    fs::create_directories(c.out_dir);
    ManifestWriter manifest("backtest", c);

    auto t0 = std::chrono::steady_clock::now();
    Model model = load_model_checked(c, model_path);
    PreparedData d = prepare(c, model.spec().window_n);
    manifest.add_timing("prepare", seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    const DateRange test_r = parse_range(c.test_first, c.test_last, "test");
    PriceSeries test_series;
    test_series.instrument = d.series.instrument;
    for (const PriceRow& row : d.series.rows) {
        if (test_r.contains(row.date)) test_series.rows.push_back(row);
    }
    auto forecasts = dated_forecasts(model, d.split.test);
    StrategyConfig strat = strategy_config(c);
    BacktestResult pred = run_prediction_strategy(test_series, forecasts, strat);
    BacktestResult bench = run_benchmark(test_series, strat);
    manifest.add_timing("backtest", seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    const std::string bt_csv = join_path(c.out_dir, "backtest.csv");
    const std::string trades_csv = join_path(c.out_dir, "trades.csv");
    const std::string summary_csv = join_path(c.out_dir, "summary.csv");
    const std::string arr_svg = join_path(c.out_dir, "arr.svg");
    write_backtest_csv(pred, bench, bt_csv);
    write_trades_csv(pred.trades, trades_csv);
    {
        std::FILE* f = std::fopen(summary_csv.c_str(), "w");
        if (!f) throw DataError("cannot write '" + summary_csv + "'");
        std::fprintf(f, "instrument,strategy,final_value,arr,trades\n");
        std::fprintf(f, "%s,prediction,%.10g,%.10g,%zu\n",
                     c.instrument.c_str(), pred.final_value, pred.final_arr,
                     pred.trades.size());
        std::fprintf(f, "%s,benchmark,%.10g,%.10g,%zu\n", c.instrument.c_str(),
                     bench.final_value, bench.final_arr, bench.trades.size());
        std::fclose(f);
    }
    {
        ChartSeries sp{"prediction", "#d62728", {}, {}};
        ChartSeries sb{"benchmark", "#1f77b4", {}, {}};
        for (std::size_t i = 0; i < pred.arrs.size(); ++i) {
            sp.xs.push_back(static_cast<double>(i));
            sp.ys.push_back(pred.arrs[i]);
            sb.xs.push_back(static_cast<double>(i));
            sb.ys.push_back(bench.arrs[i]);
        }
        write_line_chart(arr_svg, c.instrument + " accumulated return",
                         "trading day", "arr (%)", {sp, sb});
    }
    manifest.add_timing("artifacts", seconds_since(t0));

    manifest.add_artifact(bt_csv);
    manifest.add_artifact(trades_csv);
    manifest.add_artifact(summary_csv);
    manifest.add_artifact(arr_svg);
    manifest.add_result("prediction_arr", pred.final_arr);
    manifest.add_result("benchmark_arr", bench.final_arr);
    manifest.add_result("trades", pred.trades.size());
    manifest.write(join_path(c.out_dir, "manifest.json"));

    std::printf("prediction arr %.4g%% over %zu trades; benchmark %.4g%%\n",
                pred.final_arr, pred.trades.size(), bench.final_arr);
    return 0;
}

int cmd_gradcheck(double step, double tol, bool demo_failure,
                  std::uint64_t seed) {
    GradCheckReport demo;
    if (demo_failure) {
        // harness check: a relu evaluated exactly at its kink disagrees with
        // central differences by construction, so this must come out red
        auto w = param({3});
        w->at(0) = -1.0;
        w->at(1) = 0.0;
        w->at(2) = 1.0;
        demo = grad_check(
            [&](Tape& tape) { return tape.sum(tape.relu(w)); }, {{"w", w}},
            step, tol);
    }
    SuiteResult suite = run_gradient_suite(step, tol, seed);
    if (demo_failure) suite.cases.push_back({"demo.relu_kink", demo});

    bool all_ok = true;
    for (const SuiteCase& c : suite.cases) {
        const GradCheckEntry* worst = c.report.worst();
        std::printf("%-24s %-4s max_rel_err=%.3e", c.name.c_str(),
                    c.report.passed() ? "ok" : "FAIL",
                    c.report.max_rel_err());
        if (!c.report.passed() && worst) {
            std::printf("  worst=%s", worst->name.c_str());
        }
        std::printf("\n");
        all_ok = all_ok && c.report.passed();
    }
    std::printf("%s: max relative error %.3e (tolerance %.1e, step %.1e)\n",
                all_ok ? "PASS" : "FAIL", suite.max_rel_err(), tol, step);
    return all_ok ? 0 : 1;
}

int cmd_synth(const RunConfig& c, std::size_t days, std::uint64_t seed) {
    if (days < 2) {
        throw ConfigError("synthetic series needs at least 2 days");
    }
    fs::create_directories(c.out_dir);
    ManifestWriter manifest("synth", c);
    auto t0 = std::chrono::steady_clock::now();
    PriceSeries s = synthetic_series(days, seed);
    const std::string csv = join_path(c.out_dir, "synthetic.csv");
    write_price_csv(s, csv);
    manifest.add_timing("synth", seconds_since(t0));
    manifest.add_artifact(csv);
    manifest.add_result("days", days);
    manifest.add_result("first", s.rows.front().date.str());
    manifest.add_result("last", s.rows.back().date.str());
    manifest.write(join_path(c.out_dir, "manifest.json"));
    std::printf("wrote %zu rows (%s .. %s) to %s\n", days,
                s.rows.front().date.str().c_str(),
                s.rows.back().date.str().c_str(), csv.c_str());
    return 0;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const SerializationError*>(&e)) return 3;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    if (dynamic_cast<const DivergenceError*>(&e)) return 4;
    return 5;
}

const char* error_type(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
    if (dynamic_cast<const VersionError*>(&e)) return "VersionError";
    if (dynamic_cast<const TruncatedError*>(&e)) return "TruncatedError";
    if (dynamic_cast<const ChecksumError*>(&e)) return "ChecksumError";
    if (dynamic_cast<const SerializationError*>(&e)) return "SerializationError";
    if (dynamic_cast<const DataError*>(&e)) return "DataError";
    if (dynamic_cast<const DivergenceError*>(&e)) return "DivergenceError";
    if (dynamic_cast<const DimensionError*>(&e)) return "DimensionError";
    if (dynamic_cast<const ContractError*>(&e)) return "ContractError";
    return "InternalError";
}

std::string upper_snake(std::string s) {
    for (char& c : s) {
        if (c == '-') {
            c = '_';
        } else {
            c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural close-price forecasting toolkit: residual conv + "
                 "LSTM models, training, evaluation and a rule-based "
                 "backtest"};
    app.set_version_flag("--version", std::string(kToolName) + " " +
                                          kToolVersion);
    // Common options live on the root app so the flat config file and the
    // env overrides bind to them; fallthrough lets them appear after the
    // verb on the command line.
    app.fallthrough(true);
    app.set_config("--config", "", "Read options from a key=value file");
    app.require_subcommand(1);

    RunConfig c;
    bool print_config = false;
    std::uint64_t master_seed = 0;
    bool master_seed_set = false;

    // every option also reads RESNLS_<NAME> from the environment
    auto opt = [&](const std::string& name, auto& dest,
                   const std::string& help) {
        CLI::Option* o = app.add_option(name, dest, help);
        o->envname("RESNLS_" + upper_snake(name.substr(2)));
        return o;
    };
    auto flag = [&](const std::string& name, bool& dest,
                    const std::string& help) {
        CLI::Option* o = app.add_flag(name, dest, help);
        o->envname("RESNLS_" + upper_snake(name.substr(2)));
        return o;
    };

    opt("--data", c.data_path,
        "Price CSV (date,open,high,low,close); empty uses the bundled "
        "synthetic series");
    opt("--instrument", c.instrument, "Instrument label");
    opt("--train-first", c.train_first, "Train range start");
    opt("--train-last", c.train_last, "Train range end");
    opt("--test-first", c.test_first, "Test range start");
    opt("--test-last", c.test_last, "Test range end");
    opt("--arch", c.arch, "Architecture: resnls, cnn, rnn, lstm, bilstm");
    opt("--window-n", c.window_n, "Input window length");
    opt("--conv-filters", c.conv_filters, "Conv channels");
    opt("--kernel-size", c.kernel_size, "Conv kernel (odd)");
    opt("--lstm-hidden", c.lstm_hidden, "Recurrent hidden size");
    opt("--dropout-keep", c.dropout_keep, "Dropout keep probability in (0,1]");
    flag("--bn-after-each-conv", c.bn_after_each_conv,
         "Normalize after every conv instead of once");
    opt("--init-seed", c.init_seed, "Weight init seed");
    opt("--learning-rate", c.learning_rate, "Adam learning rate");
    opt("--batch-size", c.batch_size, "Mini-batch size");
    opt("--epochs", c.epochs, "Training epochs");
    opt("--weight-decay", c.weight_decay, "Decoupled decay on conv kernels");
    opt("--adam-beta1", c.adam_beta1, "Adam beta1");
    opt("--adam-beta2", c.adam_beta2, "Adam beta2");
    opt("--adam-eps", c.adam_eps, "Adam epsilon");
    opt("--shuffle-seed", c.shuffle_seed, "Batch shuffle seed");
    opt("--threshold", c.threshold, "Trading trigger band");
    opt("--initial-cash", c.initial_cash, "Backtest starting cash");
    opt("--execution", c.execution,
        "Execution price: next_open or next_close");
    opt("--out", c.out_dir, "Output directory");
    opt("--seed", master_seed,
        "Master seed: overrides both init-seed and shuffle-seed");
    app.add_flag("--print-config", print_config,
                 "Print the resolved configuration and exit");

    CLI::App* t_train = app.add_subcommand("train", "Fit a model and write it "
                                                    "with its loss curves");

    std::string model_path;
    CLI::App* t_eval = app.add_subcommand(
        "evaluate", "Score a trained model on the test range");
    t_eval->add_option("--model", model_path, "Model file to load");

    std::vector<std::size_t> n_list = {3, 5, 10, 20, 40, 60};
    std::size_t jobs = 1;
    CLI::App* t_sweep = app.add_subcommand(
        "sweep", "Train one model per window length and tabulate the errors");
    t_sweep->add_option("--n-list", n_list, "Window lengths to sweep");
    t_sweep->add_option("--jobs", jobs, "Parallel training workers");

    CLI::App* t_back = app.add_subcommand(
        "backtest", "Replay the trading rule against buy-and-hold");
    t_back->add_option("--model", model_path, "Model file to load");

    double gc_step = 1e-5, gc_tol = 1e-4;
    bool demo_failure = false;
    CLI::App* t_gc = app.add_subcommand(
        "gradcheck", "Finite-difference check of every layer and "
                     "architecture");
    t_gc->add_option("--step", gc_step, "Central difference step");
    t_gc->add_option("--tol", gc_tol, "Relative error tolerance");
    t_gc->add_flag("--demo-failure", demo_failure,
                   "Also run a deliberately broken case to prove failures "
                   "are caught");

    std::size_t synth_days = kSyntheticDays;
    std::uint64_t synth_seed = kSyntheticSeed;
    CLI::App* t_synth = app.add_subcommand(
        "synth", "Write the synthetic price series to CSV");
    t_synth->add_option("--days", synth_days, "Trading days to generate");
    t_synth->add_option("--synth-seed", synth_seed, "Generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // config validation problems exit with 2
    }

    try {
        master_seed_set = app.count("--seed") > 0;
        if (master_seed_set) {
            c.init_seed = master_seed;
            c.shuffle_seed = master_seed;
        }
        if (print_config) {
            std::printf("%s\n", config_json(c).dump(2).c_str());
            return 0;
        }
        if (t_train->parsed()) return cmd_train(c);
        if (t_eval->parsed()) {
            if (model_path.empty()) model_path = join_path(c.out_dir, "model.bin");
            return cmd_evaluate(c, model_path);
        }
        if (t_sweep->parsed()) return cmd_sweep(c, n_list, jobs);
        if (t_back->parsed()) {
            if (model_path.empty()) model_path = join_path(c.out_dir, "model.bin");
            return cmd_backtest(c, model_path);
        }
        if (t_gc->parsed()) {
            return cmd_gradcheck(gc_step, gc_tol, demo_failure,
                                 master_seed_set ? master_seed : 7);
        }
        if (t_synth->parsed()) return cmd_synth(c, synth_days, synth_seed);
        return 2;
    } catch (const std::exception& e) {
        const int code = exit_code_for(e);
        json err{{"error", {{"type", error_type(e)}, {"message", e.what()}}},
                 {"exit_code", code}};
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return code;
    }
}
