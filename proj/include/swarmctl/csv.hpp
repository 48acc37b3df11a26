#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace swarmctl {

/// Shortest round-trip decimal form; locale-independent and deterministic,
/// so identical values always serialize to identical bytes.
inline void append_number(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

inline void append_number(std::string& out, long v) { out += std::to_string(v); }
inline void append_number(std::string& out, int v) { out += std::to_string(v); }

inline double parse_double(std::string_view field, const std::string& what, std::size_t line_no) {
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size())
        throw std::runtime_error(what + ": malformed numeric field '" + std::string(field) +
                                 "' at line " + std::to_string(line_no));
    return v;
}

inline long parse_long(std::string_view field, const std::string& what, std::size_t line_no) {
    long v = 0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size())
        throw std::runtime_error(what + ": malformed integer field '" + std::string(field) +
                                 "' at line " + std::to_string(line_no));
    return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

}  // namespace swarmctl
