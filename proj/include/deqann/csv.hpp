#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "deqann/errors.hpp"

namespace deqann::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // every row has header.size() cells

    std::size_t column(const std::string& name) const;  // LookupError when absent
};

// Comma-separated, no quoting; lines starting with '#' are skipped.
// Every data row must match the header width.
Table read_table(std::istream& in, const std::string& source_name);
Table read_table_file(const std::string& path);

std::string format_double(double v);  // round-trip exact (%.17g)
double parse_double(const std::string& cell, const std::string& context);
long parse_long(const std::string& cell, const std::string& context);

}  // namespace deqann::csv
