#include "resnls/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "resnls/errors.hpp"

namespace resnls {

namespace {

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static const int len[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && leap(y) ? 29 : len[m - 1];
}

}  // namespace

bool Date::valid() const {
    return y >= 1 && y <= 9999 && m >= 1 && m <= 12 && d >= 1 &&
           d <= days_in_month(y, m);
}

Date Date::parse(const std::string& s) {
    auto bad = [&] { throw DataError("invalid date '" + s + "'"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') bad();
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
        if (s[i] < '0' || s[i] > '9') bad();
    }
    Date date;
    date.y = (s[0] - '0') * 1000 + (s[1] - '0') * 100 + (s[2] - '0') * 10 +
             (s[3] - '0');
    date.m = (s[5] - '0') * 10 + (s[6] - '0');
    date.d = (s[8] - '0') * 10 + (s[9] - '0');
    if (!date.valid()) bad();
    return date;
}

std::string Date::str() const {
    char buf[11];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    return buf;
}

long Date::to_days() const {
    // days-from-civil, proleptic Gregorian
    int yy = y - (m <= 2);
    const long era = (yy >= 0 ? yy : yy - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(yy - era * 400);
    const unsigned doy =
        (153 * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 +
        static_cast<unsigned>(d) - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

Date Date::from_days(long days) {
    const long z = days + 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long yy = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    Date date;
    date.d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    date.m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    date.y = static_cast<int>(yy + (date.m <= 2));
    return date;
}

int Date::weekday() const {
    const long wd = (to_days() + 3) % 7;
    return static_cast<int>(wd < 0 ? wd + 7 : wd);
}

Date Date::next_weekday() const {
    Date next = from_days(to_days() + 1);
    while (next.weekday() >= 5) next = from_days(next.to_days() + 1);
    return next;
}

double PriceRow::field(PriceField f) const {
    switch (f) {
        case PriceField::kOpen: return open;
        case PriceField::kHigh: return high;
        case PriceField::kLow: return low;
        case PriceField::kClose: return close;
    }
    throw ContractError("unknown price field");
}

namespace {

double parse_price(const std::string& cell, const std::string& where) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = first + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || cell.empty()) {
        throw DataError(where + ": malformed number '" + cell + "'");
    }
    return v;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

void chop_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

PriceSeries parse_price_csv(std::istream& in, const std::string& instrument,
                            const std::string& origin) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(origin + ": empty file");
    }
    chop_cr(line);
    if (line != "date,open,high,low,close") {
        throw DataError(origin +
                        ": expected header 'date,open,high,low,close', got '" +
                        line + "'");
    }
    PriceSeries series;
    series.instrument = instrument;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        chop_cr(line);
        const std::string where = origin + " line " + std::to_string(lineno);
        auto fields = split_fields(line);
        if (fields.size() != 5) {
            throw DataError(where + ": expected 5 fields, got " +
                            std::to_string(fields.size()));
        }
        PriceRow row;
        try {
            row.date = Date::parse(fields[0]);
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
        row.open = parse_price(fields[1], where);
        row.high = parse_price(fields[2], where);
        row.low = parse_price(fields[3], where);
        row.close = parse_price(fields[4], where);
        series.rows.push_back(row);
    }
    if (series.rows.empty()) {
        throw DataError(origin + ": no data rows");
    }
    std::sort(series.rows.begin(), series.rows.end(),
              [](const PriceRow& a, const PriceRow& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < series.rows.size(); ++i) {
        if (series.rows[i].date == series.rows[i - 1].date) {
            throw DataError(origin + ": duplicate date " +
                            series.rows[i].date.str());
        }
    }
    for (const PriceRow& r : series.rows) {
        if (r.open <= 0.0 || r.high <= 0.0 || r.low <= 0.0 || r.close <= 0.0) {
            throw DataError(origin + ": non-positive price on " + r.date.str());
        }
        if (r.low > std::min(r.open, r.close) ||
            std::max(r.open, r.close) > r.high) {
            throw DataError(origin + ": OHLC ordering violated on " +
                            r.date.str());
        }
    }
    return series;
}

PriceSeries ingest_csv(const std::string& path, const std::string& instrument) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    return parse_price_csv(in, instrument, path);
}

void write_price_csv(const PriceSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    out << "date,open,high,low,close\n";
    char buf[128];
    for (const PriceRow& r : series.rows) {
        std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%.4f\n",
                      r.date.str().c_str(), r.open, r.high, r.low, r.close);
        out << buf;
    }
    if (!out) {
        throw DataError("write failed for '" + path + "'");
    }
}

Normalizer fit_normalizer(const PriceSeries& series, PriceField field,
                          const DateRange& range) {
    double lo = 0.0, hi = 0.0;
    std::size_t count = 0;
    for (const PriceRow& r : series.rows) {
        if (!range.contains(r.date)) continue;
        const double v = r.field(field);
        if (count == 0) {
            lo = hi = v;
        } else {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        ++count;
    }
    if (count < 2) {
        throw DataError("normalizer range " + range.first.str() + ".." +
                        range.last.str() + " holds " + std::to_string(count) +
                        " values; need at least 2");
    }
    if (lo == hi) {
        throw DataError("normalizer range is degenerate: all values equal " +
                        std::to_string(lo));
    }
    Normalizer norm;
    norm.min = lo;
    norm.max = hi;
    norm.fitted_first = range.first;
    norm.fitted_last = range.last;
    return norm;
}

namespace {

// Windows whose targets are the series rows at indices first..last; each
// input is the n rows immediately preceding its target.
WindowedDataset windows_for_targets(const PriceSeries& series, PriceField field,
                                    const Normalizer& norm, std::size_t n,
                                    std::size_t first, std::size_t last) {
    const std::size_t count = last - first + 1;
    WindowedDataset out;
    out.window_n = n;
    out.inputs = tensor({count, n});
    out.targets = tensor({count, 1});
    out.dates.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t target = first + w;
        for (std::size_t j = 0; j < n; ++j) {
            out.inputs->at(w, j) =
                norm.transform(series.rows[target - n + j].field(field));
        }
        out.targets->at(w, 0) = norm.transform(series.rows[target].field(field));
        out.dates.push_back(series.rows[target].date);
    }
    return out;
}

// Index span [first, last] of rows inside the range, or count 0.
std::pair<std::size_t, std::size_t> range_span(const PriceSeries& series,
                                               const DateRange& range,
                                               std::size_t& count) {
    std::size_t first = 0, last = 0;
    count = 0;
    for (std::size_t i = 0; i < series.rows.size(); ++i) {
        if (!range.contains(series.rows[i].date)) continue;
        if (count == 0) first = i;
        last = i;
        ++count;
    }
    return {first, last};
}

}  // namespace

WindowedDataset make_windows(const PriceSeries& series, PriceField field,
                             const Normalizer& norm, std::size_t n,
                             const DateRange& range) {
    if (n < 1) {
        throw ConfigError("window length must be at least 1");
    }
    std::size_t count = 0;
    auto [first, last] = range_span(series, range, count);
    if (count < n + 1) {
        throw DataError("range " + range.first.str() + ".." +
                        range.last.str() + " has " + std::to_string(count) +
                        " trading days; need at least " +
                        std::to_string(n + 1));
    }
    return windows_for_targets(series, field, norm, n, first + n, last);
}

SplitResult split(const PriceSeries& series, PriceField field, std::size_t n,
                  const DateRange& train_range, const DateRange& test_range) {
    if (train_range.last < train_range.first ||
        test_range.last < test_range.first) {
        throw ConfigError("date range is reversed");
    }
    if (!(train_range.last < test_range.first)) {
        throw ConfigError("train range " + train_range.first.str() + ".." +
                          train_range.last.str() +
                          " must end before the test range begins (" +
                          test_range.first.str() + ")");
    }
    SplitResult result;
    result.normalizer = fit_normalizer(series, field, train_range);
    result.train = make_windows(series, field, result.normalizer, n, train_range);

    std::size_t test_count = 0;
    auto [test_first, test_last] = range_span(series, test_range, test_count);
    if (test_count == 0) {
        throw DataError("test range " + test_range.first.str() + ".." +
                        test_range.last.str() + " contains no trading days");
    }
    if (test_first < n) {
        throw DataError("test range needs " + std::to_string(n) +
                        " days of history before " +
                        series.rows[test_first].date.str() + "; only " +
                        std::to_string(test_first) + " available");
    }
    result.test = windows_for_targets(series, field, result.normalizer, n,
                                      test_first, test_last);
    return result;
}

PriceSeries synthetic_series(std::size_t days, std::uint64_t seed) {
    if (days < 2) {
        throw ConfigError("synthetic series needs at least 2 days");
    }
    constexpr double kTau = 6.283185307179586476925286766559;
    PriceSeries series;
    series.instrument = "synthetic";
    series.rows.reserve(days);
    DetRng rng(seed);
    Date date{2011, 1, 3};
    double noise = 0.0;
    double prev_close = 0.0;
    for (std::size_t t = 0; t < days; ++t) {
        noise = 0.8 * noise + 30.0 * rng.normal();
        const double ft = static_cast<double>(t);
        const double close = 3000.0 + 650.0 * std::sin(kTau * ft / 250.0) +
                             180.0 * std::sin(kTau * ft / 37.0) + noise;
        const double open = t == 0 ? close * 0.999 : prev_close;
        const double high =
            std::max(open, close) * (1.0 + 0.002 * rng.uniform());
        const double low = std::min(open, close) * (1.0 - 0.002 * rng.uniform());
        series.rows.push_back({date, open, high, low, close});
        prev_close = close;
        date = date.next_weekday();
    }
    return series;
}

}  // namespace resnls
