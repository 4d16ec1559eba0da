#pragma once

#include <optional>
#include <string>
#include <vector>

namespace cbdae {

// Numeric table with a header row. Cells may be empty (warm-up rows).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::optional<double>>> rows;

    std::size_t column_index(const std::string& name) const;  // throws IoError
};

// Round-trip-exact decimal rendering of a 64-bit float.
std::string format_double(double v);

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

}  // namespace cbdae
