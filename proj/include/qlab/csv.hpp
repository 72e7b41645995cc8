#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace qlab {

/// Minimal CSV with quoting for fields containing commas, quotes or
/// newlines. All files this project writes have a header row.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);

    void row(const std::vector<std::string>& fields);

    /// Doubles are rendered with round-trip precision.
    static std::string num(double v);
    static std::string num(long v);
    static std::string num(int v);

private:
    std::ofstream out_;
};

/// Parses a whole CSV file into rows of fields (header included).
std::vector<std::vector<std::string>> read_csv(const std::string& path);

std::string csv_escape(const std::string& field);

}  // namespace qlab
