#pragma once

#include <string>
#include <vector>

#include "resnls/data.hpp"
#include "resnls/model.hpp"

namespace resnls {

enum class ExecutionPrice { kNextOpen, kNextClose };

struct StrategyConfig {
    double threshold = 0.01;          // trigger band around the current close
    double initial_cash = 1'000'000.0;
    ExecutionPrice execution_price = ExecutionPrice::kNextOpen;

    void validate() const;
};

// (V_n - V_0) / V_0 * 100. The initial value must be positive.
double arr(double v0, double vn);

struct Trade {
    enum class Side { kBuy, kSell };
    Date date;  // execution day
    Side side = Side::kBuy;
    double price = 0.0;
    double quantity = 0.0;
};

std::string trade_side_name(Trade::Side side);

// A close forecast for the given trading day, in index points.
struct DatedForecast {
    Date date;
    double value = 0.0;
};

// One row per trading day. cash/shares/value are the end-of-day state after
// any execution, marked at that day's close; forecast is the next-day
// forecast read at the close (NaN when there is none) and action is what was
// executed that day.
struct BacktestResult {
    double initial_value = 0.0;
    double final_value = 0.0;
    double final_arr = 0.0;
    std::vector<Date> dates;
    std::vector<double> closes;
    std::vector<double> forecasts;
    std::vector<std::string> actions;  // "buy", "sell" or "hold"
    std::vector<double> cash;
    std::vector<double> shares;
    std::vector<double> values;
    std::vector<double> arrs;  // percent, against the initial cash
    std::vector<Trade> trades;
};

// Rule-based replay: at each close, compare the next day's forecast with the
// current close; outside the threshold band go all-in (from cash) or all-out
// (from shares) at the NEXT day's execution price. No fees, fractional
// shares. Every day before the last needs a forecast dated to its successor.
BacktestResult run_prediction_strategy(const PriceSeries& series,
                                       const std::vector<DatedForecast>& forecasts,
                                       const StrategyConfig& config);

// Buy-and-hold: all cash into shares at the first day's execution price,
// held to the end.
BacktestResult run_benchmark(const PriceSeries& series,
                             const StrategyConfig& config);

// Pairs each test window's target date with the model's denormalized
// prediction; ready to feed the strategy.
std::vector<DatedForecast> dated_forecasts(Model& model,
                                           const WindowedDataset& test);

// `date,close,forecast,action,cash,shares,value,arr_pred,arr_bench`; the two
// results must cover the same days.
void write_backtest_csv(const BacktestResult& pred, const BacktestResult& bench,
                        const std::string& path);

// `date,side,price,quantity`.
void write_trades_csv(const std::vector<Trade>& trades, const std::string& path);

}  // namespace resnls
