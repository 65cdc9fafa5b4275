#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sepll {

/// Splits on whitespace and ASCII punctuation. Bytes >= 0x80 count as word
/// characters so UTF-8 words stay intact. ASCII letters are lowercased when
/// `lowercase` is set.
inline std::vector<std::string> tokenize(std::string_view text, bool lowercase = true) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        const bool word = u >= 0x80 || (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') ||
                          u == '_';
        if (word) {
            cur.push_back(lowercase && u >= 'A' && u <= 'Z' ? static_cast<char>(u - 'A' + 'a') : ch);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto pos = s.find(sep, start);
        const auto piece = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (!piece.empty()) out.emplace_back(piece);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace sepll
