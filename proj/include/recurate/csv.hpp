#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace recurate {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index by name; throws DataError naming the column when absent.
    std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

// Shortest decimal string that round-trips the value exactly.
std::string format_double(double x);

double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace recurate
