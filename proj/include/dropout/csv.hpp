#pragma once

// Minimal RFC-4180 reader and writer.

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dropout/common.hpp"

namespace dropout::csv {

struct Record {
    std::size_t line = 0;  // 1-based physical line on which the record starts
    std::vector<std::string> fields;
};

/// Parse a whole CSV document. Quoted fields may contain commas, doubled
/// quotes and line breaks. CRLF and LF line endings are both accepted.
inline std::vector<Record> parse(std::string_view text) {
    std::vector<Record> out;
    Record cur;
    std::string field;
    std::size_t line = 1;
    cur.line = 1;
    bool in_quotes = false;
    bool field_started = false;
    bool record_has_content = false;

    auto end_field = [&] {
        cur.fields.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        if (record_has_content || !cur.fields.empty()) {
            end_field();
            out.push_back(std::move(cur));
        }
        cur = Record{};
        cur.line = line;
        record_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started && !field.empty())
                    throw DataError("csv: stray quote on line " + std::to_string(line));
                in_quotes = true;
                field_started = true;
                record_has_content = true;
                break;
            case ',':
                end_field();
                record_has_content = true;
                break;
            case '\r':
                break;
            case '\n':
                ++line;
                end_record();
                break;
            default:
                field.push_back(c);
                field_started = true;
                record_has_content = true;
        }
    }
    if (in_quotes) throw DataError("csv: unterminated quoted field starting near line " + std::to_string(cur.line));
    if (record_has_content || !cur.fields.empty()) {
        end_field();
        out.push_back(std::move(cur));
    }
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string quote(std::string_view field) {
    const bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!needs) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os << ',';
        os << quote(fields[i]);
    }
    os << '\n';
}

}  // namespace dropout::csv
