#include "ttc/util/strings.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace ttc::util {

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) lines.emplace_back(text.substr(start));
            break;
        }
        std::string_view line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

std::size_t whitespace_token_count(std::string_view text) {
    std::size_t count = 0;
    bool in_word = false;
    for (char c : text) {
        bool space = std::isspace(static_cast<unsigned char>(c));
        if (!space && !in_word) ++count;
        in_word = !space;
    }
    return count;
}

std::string truncate_middle(const std::string& text, std::size_t max_bytes) {
    if (text.size() <= max_bytes) return text;
    static const std::string marker = "\n... [truncated] ...\n";
    if (max_bytes <= marker.size()) return text.substr(0, max_bytes);
    std::size_t keep = max_bytes - marker.size();
    std::size_t head = keep / 2;
    std::size_t tail = keep - head;
    return text.substr(0, head) + marker + text.substr(text.size() - tail);
}

std::uint64_t fnv1a_fields(const std::vector<std::string>& fields) {
    std::uint64_t h = 14695981039346656037ull;
    auto feed = [&h](unsigned char byte) {
        h ^= byte;
        h *= 1099511628211ull;
    };
    for (const auto& field : fields) {
        for (unsigned char c : field) feed(c);
        feed(0x1e);
    }
    return h;
}

std::string to_hex(std::uint64_t value) {
    std::ostringstream oss;
    oss << std::hex << value;
    return oss.str();
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

} // namespace ttc::util
