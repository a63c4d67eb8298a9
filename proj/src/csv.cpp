#include "deqann/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>

namespace deqann::csv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw LookupError("column '" + name + "' not found");
}

Table read_table(std::istream& in, const std::string& source_name) {
    Table t;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_line(line);
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw ParseError(source_name + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(t.header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    if (!have_header) throw ParseError(source_name + ": missing header row");
    return t;
}

Table read_table_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    return read_table(in, path);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& cell, const std::string& context) {
    const char* s = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    if (end == s || *end != '\0') {
        throw ParseError(context + ": '" + cell + "' is not a number");
    }
    return v;
}

long parse_long(const std::string& cell, const std::string& context) {
    const char* s = cell.c_str();
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (end == s || *end != '\0') {
        throw ParseError(context + ": '" + cell + "' is not an integer");
    }
    return v;
}

}  // namespace deqann::csv
