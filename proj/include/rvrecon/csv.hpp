#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rvrecon/errors.hpp"
#include "rvrecon/matrix.hpp"

namespace rvrecon::csv {

// Shortest form that still uses 17 significant digits, so parse(format(x)) == x.
inline std::string format_real(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

struct Table {
    std::vector<std::string> header;
    Matrix data;
};

// Reads a header line followed by numeric rows. Row numbers in messages are
// 1-based file lines.
inline Table read_numeric(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + ": cannot open file");
    const std::string file = path.string();

    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw SchemaError(file + ": missing header");
    Table table;
    for (auto field : split(trim(line))) table.header.emplace_back(trim(field));
    const std::size_t ncols = table.header.size();

    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto fields = split(body);
        if (fields.size() != ncols) {
            throw SchemaError(file + ": row " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                              " fields, expected " + std::to_string(ncols));
        }
        for (auto field : fields) {
            field = trim(field);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (ec != std::errc() || ptr != field.data() + field.size()) {
                throw DataError(file + ": row " + std::to_string(lineno) + ": non-numeric value '" +
                                std::string(field) + "'");
            }
            if (!std::isfinite(v)) {
                throw DataError(file + ": row " + std::to_string(lineno) + ": non-finite value");
            }
            values.push_back(v);
        }
        ++rows;
    }
    table.data = Matrix(rows, ncols, std::move(values));
    return table;
}

inline void expect_header(const Table& table, std::span<const std::string> expected, const std::string& file) {
    if (table.header.size() != expected.size()) {
        throw SchemaError(file + ": expected " + std::to_string(expected.size()) + " columns, header has " +
                          std::to_string(table.header.size()));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (table.header[i] != expected[i]) {
            throw SchemaError(file + ": header column " + std::to_string(i) + " is '" + table.header[i] +
                              "', expected '" + expected[i] + "'");
        }
    }
}

inline std::size_t column_index(const Table& table, std::string_view name, const std::string& file) {
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (table.header[i] == name) return i;
    }
    throw SchemaError(file + ": no column named '" + std::string(name) + "'");
}

inline void write_numeric(std::ostream& out, std::span<const std::string> header, const Matrix& data) {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (std::size_t r = 0; r < data.rows(); ++r) {
        auto row = data.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_real(row[c]);
        out << '\n';
    }
}

inline void write_numeric(const std::filesystem::path& path, std::span<const std::string> header,
                          const Matrix& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    write_numeric(out, header, data);
    if (!out) throw DataError(path.string() + ": write failed");
}

}  // namespace rvrecon::csv
