#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "resnls/rng.hpp"
#include "resnls/tensor.hpp"

namespace resnls {

// Calendar day. Parsing and arithmetic are hand-rolled (proleptic Gregorian)
// so behavior does not depend on locale or time zone.
struct Date {
    int y = 1970;
    int m = 1;
    int d = 1;

    static Date parse(const std::string& s);  // strict YYYY-MM-DD
    std::string str() const;
    bool valid() const;

    long to_days() const;  // days since 1970-01-01
    static Date from_days(long days);
    int weekday() const;  // 0 = Monday .. 6 = Sunday
    Date next_weekday() const;

    auto operator<=>(const Date&) const = default;
};

// Inclusive on both ends.
struct DateRange {
    Date first;
    Date last;
    bool contains(const Date& d) const { return first <= d && d <= last; }
};

enum class PriceField { kOpen, kHigh, kLow, kClose };

struct PriceRow {
    Date date;
    double open = 0.0, high = 0.0, low = 0.0, close = 0.0;
    double field(PriceField f) const;
};

struct PriceSeries {
    std::string instrument;
    std::vector<PriceRow> rows;  // ascending by date, validated
};

// Reads `date,open,high,low,close` CSV; rows may arrive in any order and are
// sorted. Malformed rows, duplicate dates, non-positive prices and OHLC
// ordering violations are each rejected with a distinct message.
PriceSeries ingest_csv(const std::string& path, const std::string& instrument);
PriceSeries parse_price_csv(std::istream& in, const std::string& instrument,
                            const std::string& origin);
void write_price_csv(const PriceSeries& series, const std::string& path);

// Affine map of the training range onto [0, 1]. Values outside the fitted
// range map outside [0, 1]; they are deliberately not clamped.
struct Normalizer {
    double min = 0.0;
    double max = 1.0;
    Date fitted_first;
    Date fitted_last;

    double transform(double v) const { return (v - min) / (max - min); }
    double inverse(double u) const { return min + u * (max - min); }
};

Normalizer fit_normalizer(const PriceSeries& series, PriceField field,
                          const DateRange& range);

// Sliding windows: inputs row i holds n consecutive normalized values, the
// target is the next day's value; dates[i] is the target's date.
struct WindowedDataset {
    TensorPtr inputs;   // [N x n]
    TensorPtr targets;  // [N x 1]
    std::vector<Date> dates;
    std::size_t window_n = 0;

    std::size_t size() const { return dates.size(); }
};

WindowedDataset make_windows(const PriceSeries& series, PriceField field,
                             const Normalizer& norm, std::size_t n,
                             const DateRange& range);

struct SplitResult {
    WindowedDataset train;
    WindowedDataset test;
    Normalizer normalizer;  // fitted on the train range only
};

// Train windows live wholly inside the train range. Every test-range day gets
// a target; windows near the boundary borrow their trailing history from the
// end of the train range.
SplitResult split(const PriceSeries& series, PriceField field, std::size_t n,
                  const DateRange& train_range, const DateRange& test_range);

// Weekday-calendar series of `days` rows driven by two sine waves plus
// autoregressive noise; fully determined by the seed. Used as the bundled
// training fixture and by the `synth` command.
PriceSeries synthetic_series(std::size_t days, std::uint64_t seed);

}  // namespace resnls
