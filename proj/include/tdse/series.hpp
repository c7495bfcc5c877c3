#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tdse/common.hpp"
#include "tdse/stats.hpp"

namespace tdse {

// ---------------------------------------------------------------------------
// Calendar
// ---------------------------------------------------------------------------

struct Date {
    int year = 0;
    int month = 1;
    int day = 1;

    friend bool operator==(const Date& a, const Date& b) {
        return a.year == b.year && a.month == b.month && a.day == b.day;
    }
    friend bool operator<(const Date& a, const Date& b) {
        if (a.year != b.year) return a.year < b.year;
        if (a.month != b.month) return a.month < b.month;
        return a.day < b.day;
    }
    friend bool operator!=(const Date& a, const Date& b) { return !(a == b); }
    friend bool operator<=(const Date& a, const Date& b) { return a < b || a == b; }
};

inline bool is_leap_year(int y) { return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0); }

inline int days_in_month(int y, int m) {
    static const int len[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap_year(y)) return 29;
    return len[m - 1];
}

/// Days since 1970-01-01 (Howard Hinnant's civil-days algorithm).
inline std::int64_t days_from_civil(const Date& dt) {
    std::int64_t y = dt.year;
    const int m = dt.month, d = dt.day;
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline Date civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

inline Date add_days(const Date& d, std::int64_t n) { return civil_from_days(days_from_civil(d) + n); }

inline bool is_valid_date(int y, int m, int d) {
    return m >= 1 && m <= 12 && d >= 1 && d <= days_in_month(y, m);
}

inline std::string date_to_string(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

/// Parse strict ISO-8601 `YYYY-MM-DD`. Returns false on any malformation.
inline bool parse_date(std::string_view s, Date& out) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    auto num = [](std::string_view t, int& v) {
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        return ec == std::errc{} && p == t.data() + t.size();
    };
    int y, m, d;
    if (!num(s.substr(0, 4), y) || !num(s.substr(5, 2), m) || !num(s.substr(8, 2), d)) return false;
    if (!is_valid_date(y, m, d)) return false;
    out = {y, m, d};
    return true;
}

// ---------------------------------------------------------------------------
// Season specification
// ---------------------------------------------------------------------------

/// One month/day range, possibly wrapping the year boundary (e.g. 12-01:02-28).
struct SeasonRange {
    int start_month = 1, start_day = 1;
    int end_month = 12, end_day = 31;

    bool wraps() const {
        return std::pair(start_month, start_day) > std::pair(end_month, end_day);
    }
    bool contains(int m, int d) const {
        const auto md = std::pair(m, d);
        const auto s = std::pair(start_month, start_day);
        const auto e = std::pair(end_month, end_day);
        return wraps() ? (md >= s || md <= e) : (md >= s && md <= e);
    }
    /// The year labelling the season a date belongs to. For a wrapped range
    /// the tail months (before the calendar new year) carry the label, so
    /// Dec 2000 and Feb 2001 both belong to season-year 2000.
    int season_year(const Date& dt) const {
        if (!wraps()) return dt.year;
        return std::pair(dt.month, dt.day) >= std::pair(start_month, start_day) ? dt.year
                                                                                : dt.year - 1;
    }
};

struct SeasonSpec {
    std::vector<SeasonRange> ranges;
    std::string text;

    /// Index of the range containing (month, day), or -1.
    int range_of(int m, int d) const {
        for (std::size_t i = 0; i < ranges.size(); ++i)
            if (ranges[i].contains(m, d)) return static_cast<int>(i);
        return -1;
    }

    static SeasonSpec whole_year() {
        SeasonSpec s;
        s.ranges.push_back({1, 1, 12, 31});
        s.text = "01-01:12-31";
        return s;
    }

    /// Parse `MM-DD:MM-DD[,MM-DD:MM-DD...]`, rejecting overlapping ranges.
    static SeasonSpec parse(std::string_view spec) {
        SeasonSpec out;
        out.text = spec;
        if (spec.empty()) throw std::invalid_argument("season spec: empty");
        std::size_t pos = 0;
        auto parse_md = [&](std::string_view t, int& m, int& d) {
            const auto dash = t.find('-');
            if (dash == std::string_view::npos) throw std::invalid_argument("season spec: expected MM-DD in '" + std::string(t) + "'");
            auto num = [](std::string_view u, int& v) {
                auto [p, ec] = std::from_chars(u.data(), u.data() + u.size(), v);
                return ec == std::errc{} && p == u.data() + u.size();
            };
            if (!num(t.substr(0, dash), m) || !num(t.substr(dash + 1), d) || m < 1 || m > 12 ||
                d < 1 || d > days_in_month(2000, m))
                throw std::invalid_argument("season spec: bad month-day '" + std::string(t) + "'");
        };
        while (pos <= spec.size()) {
            auto comma = spec.find(',', pos);
            if (comma == std::string_view::npos) comma = spec.size();
            const auto item = spec.substr(pos, comma - pos);
            const auto colon = item.find(':');
            if (colon == std::string_view::npos)
                throw std::invalid_argument("season spec: expected MM-DD:MM-DD in '" + std::string(item) + "'");
            SeasonRange r;
            parse_md(item.substr(0, colon), r.start_month, r.start_day);
            parse_md(item.substr(colon + 1), r.end_month, r.end_day);
            out.ranges.push_back(r);
            pos = comma + 1;
            if (comma == spec.size()) break;
        }
        // Overlap check over a leap-year calendar of (month, day) cells.
        bool seen[13][32] = {};
        for (const auto& r : out.ranges) {
            for (int m = 1; m <= 12; ++m) {
                for (int d = 1; d <= days_in_month(2000, m); ++d) {
                    if (!r.contains(m, d)) continue;
                    if (seen[m][d]) throw std::invalid_argument("season spec: overlapping ranges");
                    seen[m][d] = true;
                }
            }
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// DailySeries
// ---------------------------------------------------------------------------

/// Half-open index range [begin, end) into the record arrays.
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    friend bool operator==(const IndexRange& a, const IndexRange& b) {
        return a.begin == b.begin && a.end == b.end;
    }
};

/// Missing days between record `before_record` and the next record.
struct Gap {
    std::size_t before_record = 0;
    int missing_days = 0;
    friend bool operator==(const Gap& a, const Gap& b) {
        return a.before_record == b.before_record && a.missing_days == b.missing_days;
    }
};

struct DailySeries {
    std::vector<Date> dates;
    std::vector<double> values;
    std::string season_label;
    std::vector<IndexRange> year_blocks;
    std::vector<Gap> gaps;

    std::size_t size() const { return values.size(); }

    /// Index of the block containing record i.
    std::size_t block_of(std::size_t i) const {
        for (std::size_t b = 0; b < year_blocks.size(); ++b)
            if (i >= year_blocks[b].begin && i < year_blocks[b].end) return b;
        throw std::invalid_argument("block_of: record outside all blocks");
    }

    std::vector<std::size_t> block_lengths() const {
        std::vector<std::size_t> out;
        out.reserve(year_blocks.size());
        for (const auto& b : year_blocks) out.push_back(b.size());
        return out;
    }
};

namespace detail {

/// Rebuild the gap list: any date step > 1 day between consecutive records.
inline std::vector<Gap> find_gaps(const std::vector<Date>& dates) {
    std::vector<Gap> gaps;
    for (std::size_t i = 0; i + 1 < dates.size(); ++i) {
        const auto step = days_from_civil(dates[i + 1]) - days_from_civil(dates[i]);
        if (step > 1) gaps.push_back({i, static_cast<int>(step - 1)});
    }
    return gaps;
}

/// Group consecutive records into blocks by a per-record key.
inline std::vector<IndexRange> blocks_from_keys(const std::vector<std::int64_t>& keys) {
    std::vector<IndexRange> blocks;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= keys.size(); ++i) {
        if (i == keys.size() || keys[i] != keys[i - 1]) {
            blocks.push_back({start, i});
            start = i;
        }
    }
    return blocks;
}

} // namespace detail

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

struct ColumnSpec {
    std::string date = "date";
    std::string value = "value";
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        auto comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

inline bool parse_double(std::string_view s, double& v) {
    // Tolerate surrounding spaces; the payload itself must consume fully.
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(v);
}

inline std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

} // namespace detail

/// Load a two-column CSV of (date, value). A header row is detected by the
/// first field not parsing as a date; with a header, columns are located by
/// the names in `cols`. Records are sorted by date; duplicates are rejected;
/// gaps are recorded; blocks are per calendar year.
inline DailySeries load_csv(const std::string& path, const ColumnSpec& cols = {}) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("load_csv: cannot open '" + path + "'");

    std::string line;
    std::size_t line_no = 0;
    int date_col = 0, value_col = 1;
    bool saw_header = false;

    std::vector<std::pair<Date, double>> recs;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        Date d;
        if (line_no == 1 && !parse_date(fields[0], d)) {
            // Header row: resolve the configured column names.
            date_col = value_col = -1;
            for (std::size_t i = 0; i < fields.size(); ++i) {
                if (fields[i] == cols.date) date_col = static_cast<int>(i);
                if (fields[i] == cols.value) value_col = static_cast<int>(i);
            }
            if (date_col < 0 || value_col < 0)
                throw std::invalid_argument("load_csv: header lacks columns '" + cols.date +
                                            "'/'" + cols.value + "' in '" + path + "'");
            saw_header = true;
            continue;
        }
        if (static_cast<std::size_t>(std::max(date_col, value_col)) >= fields.size())
            throw std::invalid_argument("load_csv: row " + std::to_string(line_no) + ": too few fields");
        double v;
        if (!parse_date(fields[static_cast<std::size_t>(date_col)], d) ||
            !detail::parse_double(fields[static_cast<std::size_t>(value_col)], v))
            throw std::invalid_argument("load_csv: row " + std::to_string(line_no) +
                                        ": cannot parse (date, value) from '" + line + "'");
        recs.emplace_back(d, v);
    }
    (void)saw_header;
    if (recs.empty()) throw std::invalid_argument("load_csv: no data rows in '" + path + "'");

    std::sort(recs.begin(), recs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i + 1 < recs.size(); ++i)
        if (recs[i].first == recs[i + 1].first)
            throw std::invalid_argument("load_csv: duplicate date " + date_to_string(recs[i].first));

    DailySeries s;
    s.dates.reserve(recs.size());
    s.values.reserve(recs.size());
    std::vector<std::int64_t> year_keys;
    year_keys.reserve(recs.size());
    for (const auto& [d, v] : recs) {
        s.dates.push_back(d);
        s.values.push_back(v);
        year_keys.push_back(d.year);
    }
    s.year_blocks = detail::blocks_from_keys(year_keys);
    s.gaps = detail::find_gaps(s.dates);
    return s;
}

inline void write_csv(const DailySeries& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("write_csv: cannot open '" + path + "' for writing");
    out << "date,value\n";
    for (std::size_t i = 0; i < s.size(); ++i)
        out << date_to_string(s.dates[i]) << ',' << detail::format_double(s.values[i]) << '\n';
    if (!out) throw NumericError("write_csv: write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Season extraction and filtering
// ---------------------------------------------------------------------------

/// Keep only in-season records; blocks become maximal runs of records sharing
/// (season-year, range). A December–February range spans the year boundary as
/// one block labelled by the year its December belongs to.
inline DailySeries extract_season(const DailySeries& series, const SeasonSpec& season) {
    DailySeries out;
    out.season_label = season.text;
    std::vector<std::int64_t> keys;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const Date& d = series.dates[i];
        const int r = season.range_of(d.month, d.day);
        if (r < 0) continue;
        out.dates.push_back(d);
        out.values.push_back(series.values[i]);
        keys.push_back(static_cast<std::int64_t>(season.ranges[static_cast<std::size_t>(r)].season_year(d)) *
                           64 + r);
    }
    if (out.dates.empty()) throw std::invalid_argument("extract_season: no records in season '" + season.text + "'");
    out.year_blocks = detail::blocks_from_keys(keys);
    out.gaps = detail::find_gaps(out.dates);
    return out;
}

/// Subset a series by a keep mask. Block identity is preserved: consecutive
/// kept records from one original block stay together, with a recorded gap
/// where records were dropped.
inline DailySeries filter_records(const DailySeries& series, const std::vector<char>& keep) {
    if (keep.size() != series.size()) throw std::invalid_argument("filter_records: mask size mismatch");
    DailySeries out;
    out.season_label = series.season_label;
    std::vector<std::int64_t> keys;
    for (std::size_t b = 0; b < series.year_blocks.size(); ++b) {
        const auto& blk = series.year_blocks[b];
        for (std::size_t i = blk.begin; i < blk.end; ++i) {
            if (!keep[i]) continue;
            out.dates.push_back(series.dates[i]);
            out.values.push_back(series.values[i]);
            keys.push_back(static_cast<std::int64_t>(b));
        }
    }
    if (out.dates.empty()) throw std::invalid_argument("filter_records: empty result");
    out.year_blocks = detail::blocks_from_keys(keys);
    out.gaps = detail::find_gaps(out.dates);
    return out;
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

struct SeriesSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::vector<std::size_t> block_counts;
};

inline SeriesSummary summarize(const DailySeries& s) {
    if (s.size() == 0) throw std::invalid_argument("summarize: empty series");
    SeriesSummary out;
    out.n = s.size();
    out.mean = tdse::mean(s.values);
    out.variance = tdse::variance(s.values);
    out.min = *std::min_element(s.values.begin(), s.values.end());
    out.max = *std::max_element(s.values.begin(), s.values.end());
    out.block_counts = s.block_lengths();
    return out;
}

} // namespace tdse
