#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "resnls/backtest.hpp"

using namespace resnls;

namespace {

template <typename E, typename Fn>
std::string message_of(Fn&& fn) {
    try {
        fn();
    } catch (const E& e) {
        return e.what();
    }
    return "";
}

PriceRow day(const char* date, double open, double close) {
    PriceRow r;
    r.date = Date::parse(date);
    r.open = open;
    r.close = close;
    r.high = std::max(open, close) * 1.001;
    r.low = std::min(open, close) * 0.999;
    return r;
}

// Uniform daily moves of at most +-vol, opens at the prior close.
PriceSeries random_walk(std::size_t days, std::uint64_t seed, double vol) {
    DetRng rng(seed);
    PriceSeries s;
    s.instrument = "walk";
    Date d = Date::parse("2021-01-04");
    double prev = 100.0;
    for (std::size_t i = 0; i < days; ++i) {
        PriceRow row;
        row.date = d;
        row.open = prev;
        row.close = prev * (1.0 + vol * rng.uniform(-1.0, 1.0));
        row.high = std::max(row.open, row.close) * 1.001;
        row.low = std::min(row.open, row.close) * 0.999;
        s.rows.push_back(row);
        prev = row.close;
        d = d.next_weekday();
    }
    return s;
}

// Forecast for every day after the first, equal to that day's actual close.
std::vector<DatedForecast> perfect_forecasts(const PriceSeries& s) {
    std::vector<DatedForecast> out;
    for (std::size_t t = 1; t < s.rows.size(); ++t) {
        out.push_back({s.rows[t].date, s.rows[t].close});
    }
    return out;
}

}  // namespace

TEST_SUITE("backtest") {

TEST_CASE("return formula fixtures are exact") {
    CHECK(arr(100.0, 110.0) == 10.0);
    CHECK(arr(100.0, 100.0) == 0.0);
    CHECK(arr(200.0, 150.0) == -25.0);
    CHECK_THROWS_AS(arr(0.0, 1.0), ContractError);
    CHECK_THROWS_AS(arr(-5.0, 1.0), ContractError);
}

TEST_CASE("config validation") {
    StrategyConfig ok;
    CHECK_NOTHROW(ok.validate());
    StrategyConfig bad = ok;
    bad.threshold = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.initial_cash = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("three-day ledger works out by hand") {
    PriceSeries s;
    s.rows = {day("2021-03-01", 100.0, 100.0), day("2021-03-02", 100.0, 103.0),
              day("2021-03-03", 103.0, 100.0)};
    std::vector<DatedForecast> f = {{Date::parse("2021-03-02"), 103.0},
                                    {Date::parse("2021-03-03"), 100.0}};
    StrategyConfig config;
    config.initial_cash = 1000.0;
    auto r = run_prediction_strategy(s, f, config);

    CHECK(r.final_value == 1030.0);
    CHECK(r.final_arr == 3.0);
    CHECK(r.values == std::vector<double>{1000.0, 1030.0, 1030.0});
    CHECK(r.arrs == std::vector<double>{0.0, 3.0, 3.0});
    CHECK(r.actions == std::vector<std::string>{"hold", "buy", "sell"});

    REQUIRE(r.trades.size() == 2);
    CHECK(r.trades[0].side == Trade::Side::kBuy);
    CHECK(r.trades[0].date == Date::parse("2021-03-02"));
    CHECK(r.trades[0].price == 100.0);
    CHECK(r.trades[0].quantity == 10.0);
    CHECK(r.trades[1].side == Trade::Side::kSell);
    CHECK(r.trades[1].price == 103.0);
    CHECK(r.trades[1].quantity == 10.0);
}

TEST_CASE("benchmark buys once at the first execution price") {
    PriceSeries s;
    s.rows = {day("2021-01-04", 100.0, 101.0), day("2021-01-05", 101.0, 102.5),
              day("2021-01-06", 102.5, 103.91)};
    StrategyConfig config;
    auto r = run_benchmark(s, config);

    REQUIRE(r.trades.size() == 1);
    CHECK(r.trades[0].side == Trade::Side::kBuy);
    CHECK(r.trades[0].price == 100.0);
    CHECK(r.final_arr == doctest::Approx(3.91).epsilon(1e-12));
    CHECK(r.actions.front() == "buy");
    CHECK(r.actions.back() == "hold");
    for (double sh : r.shares) CHECK(sh == r.trades[0].quantity);

    // flat series earns nothing
    PriceSeries flat;
    flat.rows = {day("2021-01-04", 100.0, 100.0),
                 day("2021-01-05", 100.0, 100.0)};
    auto rf = run_benchmark(flat, config);
    CHECK(rf.final_arr == 0.0);

    PriceSeries one;
    one.rows = {day("2021-01-04", 100.0, 100.0)};
    CHECK_THROWS_AS(run_benchmark(one, config), DataError);
}

TEST_CASE("forecasts inside the band never trade") {
    auto s = random_walk(10, 3, 0.005);  // moves well inside +-1%
    auto r = run_prediction_strategy(s, perfect_forecasts(s), StrategyConfig{});
    CHECK(r.trades.empty());
    for (double a : r.arrs) CHECK(a == 0.0);
    for (const std::string& act : r.actions) CHECK(act == "hold");
    for (double c : r.cash) CHECK(c == 1'000'000.0);
}

TEST_CASE("a missing forecast names the day it was needed for") {
    PriceSeries s;
    s.rows = {day("2021-03-01", 100.0, 100.0), day("2021-03-02", 100.0, 101.0),
              day("2021-03-03", 101.0, 102.0)};
    std::vector<DatedForecast> f = {{Date::parse("2021-03-02"), 101.0}};
    const std::string msg = message_of<DataError>(
        [&] { run_prediction_strategy(s, f, StrategyConfig{}); });
    CHECK(msg.find("2021-03-03") != std::string::npos);

    std::vector<DatedForecast> dup = {{Date::parse("2021-03-02"), 101.0},
                                      {Date::parse("2021-03-02"), 99.0}};
    CHECK_THROWS_AS(run_prediction_strategy(s, dup, StrategyConfig{}),
                    DataError);
}

TEST_CASE("execution price selection and the close fallback") {
    PriceSeries s;
    s.rows = {day("2021-03-01", 100.0, 100.0), day("2021-03-02", 0.0, 103.0),
              day("2021-03-03", 103.0, 104.0)};  // day 2 has no usable open
    std::vector<DatedForecast> f = {{Date::parse("2021-03-02"), 102.0},
                                    {Date::parse("2021-03-03"), 104.0}};
    StrategyConfig config;
    config.initial_cash = 1030.0;
    const std::string msg = message_of<DataError>(
        [&] { run_prediction_strategy(s, f, config); });
    CHECK(msg.find("2021-03-02") != std::string::npos);

    config.execution_price = ExecutionPrice::kNextClose;
    auto r = run_prediction_strategy(s, f, config);
    REQUIRE(r.trades.size() == 1);
    CHECK(r.trades[0].price == 103.0);  // executed at the close instead
    CHECK(r.shares.back() == 10.0);
}

TEST_CASE("ledger invariants on randomized fixtures") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto s = random_walk(60, 1000 + seed, 0.03);
        // noisy forecasts so buys and sells both happen
        DetRng noise(seed);
        auto f = perfect_forecasts(s);
        for (auto& df : f) df.value *= 1.0 + 0.01 * noise.uniform(-1.0, 1.0);

        StrategyConfig config;
        auto r = run_prediction_strategy(s, f, config);

        for (std::size_t t = 0; t < r.dates.size(); ++t) {
            CHECK(r.cash[t] * r.shares[t] == 0.0);  // all-in or all-out
            CHECK(r.cash[t] >= 0.0);
            CHECK(r.shares[t] >= 0.0);
            CHECK(r.values[t] > 0.0);
            CHECK(r.arrs[t] == arr(config.initial_cash, r.values[t]));
        }

        // replay the trade log: no value appears or vanishes at a trade
        double cash = config.initial_cash, shares = 0.0;
        for (const Trade& t : r.trades) {
            const double before = cash + shares * t.price;
            if (t.side == Trade::Side::kBuy) {
                CHECK(t.quantity == doctest::Approx(cash / t.price).epsilon(1e-12));
                shares = t.quantity;
                cash = 0.0;
            } else {
                CHECK(t.quantity == shares);
                cash = shares * t.price;
                shares = 0.0;
            }
            const double after = cash + shares * t.price;
            CHECK(after == doctest::Approx(before).epsilon(1e-9));
        }
        CHECK(cash == r.cash.back());
        CHECK(shares == r.shares.back());
    }
}

TEST_CASE("an unreachable threshold means staying in cash") {
    auto s = random_walk(40, 9, 0.03);
    StrategyConfig config;
    config.threshold = 1e9;
    auto r = run_prediction_strategy(s, perfect_forecasts(s), config);
    CHECK(r.trades.empty());
    for (double a : r.arrs) CHECK(a == 0.0);
}

TEST_CASE("perfect forecasts trade exactly on the >1% moves") {
    auto s = random_walk(300, 42, 0.025);
    auto r = run_prediction_strategy(s, perfect_forecasts(s), StrategyConfig{});

    // position-aware scan of the raw closes
    std::size_t expected = 0;
    bool in_cash = true;
    for (std::size_t t = 0; t + 1 < s.rows.size(); ++t) {
        const double now = s.rows[t].close;
        const double next = s.rows[t + 1].close;
        if (in_cash && next > 1.01 * now) {
            ++expected;
            in_cash = false;
        } else if (!in_cash && next < 0.99 * now) {
            ++expected;
            in_cash = true;
        }
    }
    CHECK(r.trades.size() == expected);
    CHECK(expected > 0);  // the fixture does move enough to trigger
}

TEST_CASE("the return is independent of the cash scale") {
    auto s = random_walk(80, 17, 0.03);
    auto f = perfect_forecasts(s);
    StrategyConfig big;
    StrategyConfig small;
    small.initial_cash = 1000.0;
    auto rb = run_prediction_strategy(s, f, big);
    auto rs = run_prediction_strategy(s, f, small);
    REQUIRE(rb.arrs.size() == rs.arrs.size());
    for (std::size_t t = 0; t < rb.arrs.size(); ++t) {
        CHECK(rb.arrs[t] == doctest::Approx(rs.arrs[t]).epsilon(1e-12));
    }
    CHECK(rb.trades.size() == rs.trades.size());
}

TEST_CASE("calm markets trigger only a handful of trades per year") {
    // ~0.3% average daily move, forecasts equal to the actual next closes
    DetRng rng(2024);
    PriceSeries s;
    s.instrument = "calm";
    Date d = Date::parse("2021-01-04");
    double prev = 3500.0;
    for (std::size_t i = 0; i < 251; ++i) {
        PriceRow row;
        row.date = d;
        row.open = prev;
        row.close = prev * (1.0 + 0.004 * rng.normal());
        row.high = std::max(row.open, row.close) * 1.001;
        row.low = std::min(row.open, row.close) * 0.999;
        s.rows.push_back(row);
        prev = row.close;
        d = d.next_weekday();
    }
    auto r = run_prediction_strategy(s, perfect_forecasts(s), StrategyConfig{});
    CHECK(r.trades.size() < 20);
}

TEST_CASE("picking every >1% rise on a briskly rising series matches holding") {
    // day 0 is flat so the day-1 entry happens at the benchmark's buy price;
    // with an intraday gain on day 0 the late entrant could never catch up
    PriceSeries s;
    Date d = Date::parse("2021-01-04");
    s.rows.push_back(day(d.str().c_str(), 100.0, 100.0));
    d = d.next_weekday();
    for (int i = 0; i < 11; ++i) {
        const double prev = s.rows.back().close;
        s.rows.push_back(day(d.str().c_str(), prev, prev * 1.02));
        d = d.next_weekday();
    }

    StrategyConfig config;
    auto pred = run_prediction_strategy(s, perfect_forecasts(s), config);
    auto bench = run_benchmark(s, config);
    REQUIRE(pred.trades.size() == 1);  // one entry, never exits
    for (std::size_t t = 0; t < pred.arrs.size(); ++t) {
        CHECK(pred.arrs[t] >= bench.arrs[t] - 1e-12);
    }
    CHECK(pred.final_arr == doctest::Approx(bench.final_arr).epsilon(1e-12));
}

TEST_CASE("csv exports") {
    PriceSeries s;
    s.rows = {day("2021-03-01", 100.0, 100.0), day("2021-03-02", 100.0, 103.0),
              day("2021-03-03", 103.0, 100.0)};
    std::vector<DatedForecast> f = {{Date::parse("2021-03-02"), 103.0},
                                    {Date::parse("2021-03-03"), 100.0}};
    StrategyConfig config;
    config.initial_cash = 1000.0;
    auto pred = run_prediction_strategy(s, f, config);
    auto bench = run_benchmark(s, config);

    const std::string path = "backtest_csv_test.csv";
    write_backtest_csv(pred, bench, path);
    std::ifstream in(path);
    REQUIRE(bool(in));
    std::string line;
    std::getline(in, line);
    CHECK(line ==
          "date,close,forecast,action,cash,shares,value,arr_pred,arr_bench");
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].rfind("2021-03-01,100,103,hold,", 0) == 0);
    CHECK(rows[2].find(",,") != std::string::npos);  // last day: no forecast
    std::remove(path.c_str());

    const std::string tpath = "backtest_trades_test.csv";
    write_trades_csv(pred.trades, tpath);
    std::ifstream tin(tpath);
    REQUIRE(bool(tin));
    std::getline(tin, line);
    CHECK(line == "date,side,price,quantity");
    std::getline(tin, line);
    CHECK(line == "2021-03-02,buy,100,10");
    std::getline(tin, line);
    CHECK(line == "2021-03-03,sell,103,10");
    std::remove(tpath.c_str());

    // mismatched coverage is rejected
    PriceSeries shorter;
    shorter.rows = {s.rows[0], s.rows[1]};
    auto bench2 = run_benchmark(shorter, config);
    CHECK_THROWS_AS(write_backtest_csv(pred, bench2, path), ContractError);
}

TEST_CASE("model predictions map onto dated forecasts") {
    ModelSpec spec;
    spec.architecture = Architecture::kRnn;
    spec.window_n = 3;
    spec.lstm_hidden = 4;
    Model m = Model::build(spec);
    m.normalizer.min = 3000.0;
    m.normalizer.max = 3500.0;

    WindowedDataset ds;
    ds.window_n = 3;
    ds.inputs = tensor({4, 3});
    ds.targets = tensor({4, 1});
    DetRng rng(5);
    for (double& v : ds.inputs->data()) v = rng.uniform();
    Date d = Date::parse("2021-02-01");
    for (std::size_t i = 0; i < 4; ++i) {
        ds.dates.push_back(d);
        d = d.next_weekday();
    }

    auto f = dated_forecasts(m, ds);
    REQUIRE(f.size() == 4);
    auto pred = m.predict(ds.inputs);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(f[i].date == ds.dates[i]);
        CHECK(f[i].value == m.normalizer.inverse(pred->at(i, 0)));
        CHECK(f[i].value >= 2000.0);  // denormalized onto the price scale
    }
}

}  // TEST_SUITE
