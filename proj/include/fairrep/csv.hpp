#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <vector>

#include "fairrep/error.hpp"

namespace fairrep::csv {

/// Splits one record, honouring double-quoted fields ("" is an escaped quote).
/// Returns false at end of input. Quoted fields may span lines.
inline bool read_record(std::istream& in, char delim, std::vector<std::string>& fields,
                        std::size_t& line_no) {
    fields.clear();
    std::string line;
    if (!std::getline(in, line)) return false;
    ++line_no;
    std::string field;
    bool quoted = false;
    std::size_t i = 0;
    while (true) {
        if (i == line.size()) {
            if (quoted) {
                // embedded newline inside a quoted field
                if (!std::getline(in, line)) {
                    throw DataError("unterminated quoted field starting before line " +
                                    std::to_string(line_no));
                }
                ++line_no;
                field.push_back('\n');
                i = 0;
                continue;
            }
            break;
        }
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
        ++i;
    }
    fields.push_back(std::move(field));
    return true;
}

/// ';' when the header line contains more semicolons than commas, else ','.
inline char detect_delimiter(const std::string& header_line) {
    std::size_t commas = 0, semis = 0;
    for (char c : header_line) {
        commas += c == ',';
        semis += c == ';';
    }
    return semis > commas ? ';' : ',';
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Quotes a field when it contains the delimiter, a quote or a newline.
inline std::string escape(const std::string& s, char delim = ',') {
    if (s.find_first_of(std::string{delim, '"', '\n', '\r'}) == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace fairrep::csv
