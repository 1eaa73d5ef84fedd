#pragma once

// Minimal reader for the comma-separated input tables. Every table has a header
// row; columns are addressed by name. Blank lines and lines starting with '#'
// are skipped. Errors carry "file:line".

#include <charconv>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "errors.hpp"

namespace epn::csv {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

class Row {
public:
    Row(const std::unordered_map<std::string, std::size_t>* columns, std::vector<std::string> cells, std::string where)
        : columns_(columns), cells_(std::move(cells)), where_(std::move(where)) {}

    const std::string& where() const { return where_; }

    bool has(const std::string& column) const {
        auto it = columns_->find(column);
        return it != columns_->end() && it->second < cells_.size() && !cells_[it->second].empty();
    }

    const std::string& str(const std::string& column) const {
        auto it = columns_->find(column);
        if (it == columns_->end() || it->second >= cells_.size())
            throw LoadError(LoadError::Kind::parse, where_ + ": missing column '" + column + "'");
        return cells_[it->second];
    }

    double real(const std::string& column) const {
        const auto& s = str(column);
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size())
            throw LoadError(LoadError::Kind::parse, where_ + ": '" + s + "' is not a number (column " + column + ")");
        return v;
    }

    long long integer(const std::string& column) const {
        const auto& s = str(column);
        long long v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size())
            throw LoadError(LoadError::Kind::parse, where_ + ": '" + s + "' is not an integer (column " + column + ")");
        return v;
    }

private:
    const std::unordered_map<std::string, std::size_t>* columns_;
    std::vector<std::string> cells_;
    std::string where_;
};

class Table {
public:
    static Table parse(std::istream& in, const std::string& name) {
        Table t;
        std::string line;
        std::size_t lineno = 0;
        bool have_header = false;
        while (std::getline(in, line)) {
            ++lineno;
            const auto stripped = trim(line);
            if (stripped.empty() || stripped.front() == '#') continue;
            auto cells = split(stripped);
            if (!have_header) {
                for (std::size_t i = 0; i < cells.size(); ++i) t.columns_[cells[i]] = i;
                have_header = true;
                continue;
            }
            t.raw_.push_back({std::move(cells), name + ":" + std::to_string(lineno)});
        }
        if (!have_header) throw LoadError(LoadError::Kind::parse, name + ": empty table (no header row)");
        return t;
    }

    static Table read(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw LoadError(LoadError::Kind::io, path + ": cannot open");
        return parse(in, path);
    }

    static Table from_string(const std::string& text, const std::string& name = "<string>") {
        std::istringstream in(text);
        return parse(in, name);
    }

    void require(std::initializer_list<const char*> names, const std::string& table_name) const {
        for (const char* n : names)
            if (!columns_.count(n))
                throw LoadError(LoadError::Kind::parse, table_name + ": header lacks column '" + n + "'");
    }

    std::size_t size() const { return raw_.size(); }

    Row row(std::size_t i) const { return Row(&columns_, raw_[i].cells, raw_[i].where); }

private:
    struct RawRow {
        std::vector<std::string> cells;
        std::string where;
    };
    std::unordered_map<std::string, std::size_t> columns_;
    std::vector<RawRow> raw_;
};

}  // namespace epn::csv
