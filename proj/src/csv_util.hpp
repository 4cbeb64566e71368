#pragma once

// Minimal CSV helpers shared by the file readers. Lines starting with '#'
// are provenance comments and are skipped.

#include <charconv>
#include <cstdint>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "incoqkd/error.hpp"

namespace incoqkd::detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Next non-empty, non-comment line; false at end of stream.
inline bool next_data_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        return true;
    }
    return false;
}

inline bool is_number(std::string_view s) {
    try {
        std::size_t used = 0;
        const std::string tmp(s);
        (void)std::stod(tmp, &used);
        return used == tmp.size();
    } catch (const std::exception&) {
        return false;
    }
}

inline double to_double(std::string_view s, std::string_view what) {
    try {
        std::size_t used = 0;
        const std::string tmp(s);
        const double v = std::stod(tmp, &used);
        if (used != tmp.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw IoError("malformed " + std::string(what) + " value '" + std::string(s) + "'");
    }
}

template <class Int>
Int to_int(std::string_view s, std::string_view what) {
    Int v{};
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || p != end) {
        throw IoError("malformed " + std::string(what) + " value '" + std::string(s) + "'");
    }
    return v;
}

}  // namespace incoqkd::detail
