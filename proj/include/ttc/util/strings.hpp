#pragma once
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ttc::util {

std::vector<std::string> split_lines(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string trim(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

// Whitespace-delimited word count; the token-count fallback when an
// upstream does not report usage.
std::size_t whitespace_token_count(std::string_view text);

// Keeps the head and tail of oversized text, replacing the middle with an
// elision marker. Returns the input unchanged when it fits.
std::string truncate_middle(const std::string& text, std::size_t max_bytes);

// FNV-1a 64-bit over a field list, each field terminated by RS (0x1e) so
// ("ab","c") and ("a","bc") hash differently.
std::uint64_t fnv1a_fields(const std::vector<std::string>& fields);
std::string to_hex(std::uint64_t value);

std::string lowercase(std::string s);

} // namespace ttc::util
