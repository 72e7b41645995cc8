#include "qlab/csv.hpp"

#include <charconv>
#include <stdexcept>

namespace qlab {

CsvWriter::CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char c : field) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) out_ << ',';
        out_ << csv_escape(fields[i]);
    }
    out_ << '\n';
}

std::string CsvWriter::num(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string CsvWriter::num(long v) { return std::to_string(v); }
std::string CsvWriter::num(int v) { return std::to_string(v); }

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool row_has_data = false;
    char c;
    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') { in.get(); field += '"'; }
                else in_quotes = false;
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"': in_quotes = true; row_has_data = true; break;
            case ',':
                fields.push_back(std::move(field));
                field.clear();
                row_has_data = true;
                break;
            case '\r': break;
            case '\n':
                if (row_has_data || !field.empty()) {
                    fields.push_back(std::move(field));
                    field.clear();
                    rows.push_back(std::move(fields));
                    fields.clear();
                }
                row_has_data = false;
                break;
            default: field += c; row_has_data = true; break;
        }
    }
    if (row_has_data || !field.empty()) {
        fields.push_back(std::move(field));
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace qlab
