#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "errors.hpp"
#include "graph.hpp"
#include "mixture.hpp"

namespace spatmix {

/// Counts with their region ids and category names.
struct Dataset {
    std::vector<std::string> regions;
    std::vector<std::string> categories;
    CountMatrix counts;
};

namespace csv {

inline std::string_view trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

// Non-blank lines, with the byte-order mark stripped from the first.
inline std::vector<std::pair<std::size_t, std::string>> lines(std::istream& in) {
    std::vector<std::pair<std::size_t, std::string>> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        out.emplace_back(no, line);
    }
    return out;
}

inline std::int64_t parse_count(const std::string& s, std::size_t line) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0) {
        throw parse_error("line " + std::to_string(line) + ": '" + s + "' is not a non-negative integer count");
    }
    return v;
}

inline double parse_real(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw parse_error("line " + std::to_string(line) + ": '" + s + "' is not a number");
    }
}

} // namespace csv

namespace detail {

inline CountMatrix checked_counts(const std::vector<std::vector<std::int64_t>>& rows,
                                  const std::vector<std::string>& regions) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::int64_t m = 0;
        for (auto c : rows[i]) m += c;
        if (m == 0) throw parse_error("region '" + regions[i] + "' has zero total count; remove it before fitting");
    }
    return CountMatrix::from_rows(rows);
}

} // namespace detail

/// Wide form: header `region,<cat_1>,...,<cat_J>` then one row per region.
inline Dataset read_counts_wide(std::istream& in) {
    const auto ls = csv::lines(in);
    if (ls.empty()) throw parse_error("counts file is empty");
    Dataset d;
    auto header = csv::split(ls.front().second);
    if (header.size() < 3) throw parse_error("counts header needs a region column and at least 2 categories");
    d.categories.assign(header.begin() + 1, header.end());
    std::unordered_map<std::string, std::size_t> seen;
    std::vector<std::vector<std::int64_t>> rows;
    for (std::size_t r = 1; r < ls.size(); ++r) {
        const auto& [no, text] = ls[r];
        auto cells = csv::split(text);
        if (cells.size() != header.size()) {
            throw parse_error("line " + std::to_string(no) + ": expected " + std::to_string(header.size()) +
                              " fields, found " + std::to_string(cells.size()));
        }
        if (!seen.emplace(cells[0], rows.size()).second) {
            throw parse_error("line " + std::to_string(no) + ": duplicate region id '" + cells[0] + "'");
        }
        d.regions.push_back(cells[0]);
        std::vector<std::int64_t> row;
        for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(csv::parse_count(cells[c], no));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw parse_error("counts file has no data rows");
    d.counts = detail::checked_counts(rows, d.regions);
    return d;
}

/// Long form: header then `region,group,count` rows. Regions and groups keep first-seen order;
/// absent combinations count as zero.
inline Dataset read_counts_long(std::istream& in) {
    const auto ls = csv::lines(in);
    if (ls.size() < 2) throw parse_error("long-form counts file has no data rows");
    Dataset d;
    std::unordered_map<std::string, std::size_t> region_ids, group_ids;
    std::map<std::pair<std::size_t, std::size_t>, std::int64_t> cells;
    for (std::size_t r = 1; r < ls.size(); ++r) {
        const auto& [no, text] = ls[r];
        auto f = csv::split(text);
        if (f.size() != 3) throw parse_error("line " + std::to_string(no) + ": expected region,group,count");
        auto [ri, rnew] = region_ids.try_emplace(f[0], d.regions.size());
        if (rnew) d.regions.push_back(f[0]);
        auto [gi, gnew] = group_ids.try_emplace(f[1], d.categories.size());
        if (gnew) d.categories.push_back(f[1]);
        if (!cells.emplace(std::pair{ri->second, gi->second}, csv::parse_count(f[2], no)).second) {
            throw parse_error("line " + std::to_string(no) + ": duplicate entry for region '" + f[0] + "', group '" +
                              f[1] + "'");
        }
    }
    if (d.categories.size() < 2) throw parse_error("counts need at least 2 categories");
    std::vector<std::vector<std::int64_t>> rows(d.regions.size(), std::vector<std::int64_t>(d.categories.size(), 0));
    for (const auto& [key, v] : cells) rows[key.first][key.second] = v;
    d.counts = detail::checked_counts(rows, d.regions);
    return d;
}

inline void write_counts_wide(std::ostream& out, const Dataset& d) {
    out << "region";
    for (const auto& c : d.categories) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < d.counts.n(); ++i) {
        out << d.regions[i];
        for (auto v : d.counts.row(i)) out << ',' << v;
        out << '\n';
    }
}

// `region,label` table.
inline void write_labels(std::ostream& out, const std::vector<std::string>& regions, std::span<const int> labels) {
    out << "region,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i) out << regions[i] << ',' << labels[i] << '\n';
}

struct LabelTable {
    std::vector<std::string> regions;
    LabelField labels;
};

inline LabelTable read_labels(std::istream& in) {
    const auto ls = csv::lines(in);
    if (ls.size() < 2) throw parse_error("label file has no data rows");
    LabelTable t;
    for (std::size_t r = 1; r < ls.size(); ++r) {
        const auto& [no, text] = ls[r];
        auto f = csv::split(text);
        if (f.size() < 2) throw parse_error("line " + std::to_string(no) + ": expected region,label");
        t.regions.push_back(f[0]);
        const auto v = csv::parse_count(f[1], no);
        t.labels.push_back(static_cast<int>(v));
    }
    return t;
}

/// A numeric column from a CSV with a header row. An empty `column` selects the second column.
inline std::vector<double> read_numeric_column(std::istream& in, const std::string& column) {
    const auto ls = csv::lines(in);
    if (ls.size() < 2) throw parse_error("values file has no data rows");
    const auto header = csv::split(ls.front().second);
    std::size_t idx = 1;
    if (!column.empty()) {
        idx = header.size();
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == column) idx = c;
        }
        if (idx == header.size()) throw parse_error("column '" + column + "' not found");
    } else if (header.size() < 2) {
        throw parse_error("values file needs at least two columns");
    }
    std::vector<double> out;
    for (std::size_t r = 1; r < ls.size(); ++r) {
        const auto f = csv::split(ls[r].second);
        if (f.size() != header.size()) throw parse_error("line " + std::to_string(ls[r].first) + ": wrong field count");
        out.push_back(csv::parse_real(f[idx], ls[r].first));
    }
    return out;
}

} // namespace spatmix
