#include "resnls/backtest.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "resnls/errors.hpp"

namespace resnls {

void StrategyConfig::validate() const {
    if (!(threshold > 0.0)) {
        throw ConfigError("strategy threshold must be positive");
    }
    if (!(initial_cash > 0.0)) {
        throw ConfigError("initial_cash must be positive");
    }
}

double arr(double v0, double vn) {
    if (v0 <= 0.0) {
        throw ContractError("arr: initial value must be positive, got " +
                            std::to_string(v0));
    }
    return (vn - v0) / v0 * 100.0;
}

std::string trade_side_name(Trade::Side side) {
    return side == Trade::Side::kBuy ? "buy" : "sell";
}

namespace {

double execution_price(const PriceRow& row, const StrategyConfig& config) {
    const double p = config.execution_price == ExecutionPrice::kNextOpen
                         ? row.open
                         : row.close;
    if (!(p > 0.0)) {
        throw DataError("no usable execution price on " + row.date.str());
    }
    return p;
}

void check_span(const PriceSeries& series) {
    if (series.rows.size() < 2) {
        throw DataError("backtest needs at least 2 trading days, got " +
                        std::to_string(series.rows.size()));
    }
}

void push_day(BacktestResult& r, const PriceRow& row, double forecast,
              std::string action, double cash, double shares) {
    r.dates.push_back(row.date);
    r.closes.push_back(row.close);
    r.forecasts.push_back(forecast);
    r.actions.push_back(std::move(action));
    r.cash.push_back(cash);
    r.shares.push_back(shares);
    const double value = cash + shares * row.close;
    r.values.push_back(value);
    r.arrs.push_back(arr(r.initial_value, value));
}

void finish(BacktestResult& r) {
    r.final_value = r.values.back();
    r.final_arr = r.arrs.back();
}

}  // namespace

BacktestResult run_prediction_strategy(
    const PriceSeries& series, const std::vector<DatedForecast>& forecasts,
    const StrategyConfig& config) {
    config.validate();
    check_span(series);

    std::map<Date, double> by_date;
    for (const DatedForecast& f : forecasts) {
        if (!by_date.emplace(f.date, f.value).second) {
            throw DataError("duplicate forecast for " + f.date.str());
        }
    }

    BacktestResult r;
    r.initial_value = config.initial_cash;
    double cash = config.initial_cash;
    double shares = 0.0;
    enum class Pending { kNone, kBuy, kSell };
    Pending pending = Pending::kNone;

    const std::vector<PriceRow>& rows = series.rows;
    for (std::size_t t = 0; t < rows.size(); ++t) {
        const PriceRow& row = rows[t];
        std::string action = "hold";
        if (pending != Pending::kNone) {
            const double price = execution_price(row, config);
            if (pending == Pending::kBuy) {
                shares = cash / price;
                r.trades.push_back({row.date, Trade::Side::kBuy, price, shares});
                cash = 0.0;
                action = "buy";
            } else {
                const double sold = shares;
                cash = shares * price;
                shares = 0.0;
                r.trades.push_back({row.date, Trade::Side::kSell, price, sold});
                action = "sell";
            }
            pending = Pending::kNone;
        }

        double forecast = std::numeric_limits<double>::quiet_NaN();
        if (t + 1 < rows.size()) {
            const Date target = rows[t + 1].date;
            auto it = by_date.find(target);
            if (it == by_date.end()) {
                throw DataError("no forecast for " + target.str());
            }
            forecast = it->second;
            if (forecast > (1.0 + config.threshold) * row.close &&
                cash > 0.0) {
                pending = Pending::kBuy;
            } else if (forecast < (1.0 - config.threshold) * row.close &&
                       shares > 0.0) {
                pending = Pending::kSell;
            }
        }
        push_day(r, row, forecast, std::move(action), cash, shares);
    }
    finish(r);
    return r;
}

BacktestResult run_benchmark(const PriceSeries& series,
                             const StrategyConfig& config) {
    config.validate();
    check_span(series);

    BacktestResult r;
    r.initial_value = config.initial_cash;
    const double price = execution_price(series.rows.front(), config);
    const double shares = config.initial_cash / price;
    r.trades.push_back(
        {series.rows.front().date, Trade::Side::kBuy, price, shares});

    for (std::size_t t = 0; t < series.rows.size(); ++t) {
        push_day(r, series.rows[t],
                 std::numeric_limits<double>::quiet_NaN(),
                 t == 0 ? "buy" : "hold", 0.0, shares);
    }
    finish(r);
    return r;
}

std::vector<DatedForecast> dated_forecasts(Model& model,
                                           const WindowedDataset& test) {
    auto pred = model.predict(test.inputs);
    std::vector<DatedForecast> out;
    out.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        out.push_back({test.dates[i], model.normalizer.inverse(pred->at(i, 0))});
    }
    return out;
}

void write_backtest_csv(const BacktestResult& pred, const BacktestResult& bench,
                        const std::string& path) {
    if (pred.dates.size() != bench.dates.size() || pred.dates != bench.dates) {
        throw ContractError(
            "strategy and benchmark results cover different days");
    }
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw DataError("cannot write backtest to '" + path + "'");
    }
    std::fprintf(f,
                 "date,close,forecast,action,cash,shares,value,arr_pred,"
                 "arr_bench\n");
    for (std::size_t i = 0; i < pred.dates.size(); ++i) {
        char forecast[40] = "";
        if (!std::isnan(pred.forecasts[i])) {
            std::snprintf(forecast, sizeof forecast, "%.10g",
                          pred.forecasts[i]);
        }
        std::fprintf(f, "%s,%.10g,%s,%s,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                     pred.dates[i].str().c_str(), pred.closes[i], forecast,
                     pred.actions[i].c_str(), pred.cash[i], pred.shares[i],
                     pred.values[i], pred.arrs[i], bench.arrs[i]);
    }
    std::fclose(f);
}

void write_trades_csv(const std::vector<Trade>& trades,
                      const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw DataError("cannot write trades to '" + path + "'");
    }
    std::fprintf(f, "date,side,price,quantity\n");
    for (const Trade& t : trades) {
        std::fprintf(f, "%s,%s,%.10g,%.10g\n", t.date.str().c_str(),
                     trade_side_name(t.side).c_str(), t.price, t.quantity);
    }
    std::fclose(f);
}

}  // namespace resnls
