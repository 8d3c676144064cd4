#pragma once

#include <optional>
#include <string>
#include <vector>

namespace soilspec {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Reads a comma-separated file with a header row. Handles double-quoted
/// fields; does not handle embedded newlines.
CsvTable read_csv(const std::string& path);

/// Splits one CSV line, honoring double quotes.
std::vector<std::string> split_csv_line(const std::string& line);

/// Strict double parse of a whole field; nullopt on failure or empty field.
std::optional<double> parse_double(const std::string& field);

}  // namespace soilspec
