#pragma once
#include <string>
#include <string_view>

namespace ttc::util {

// SHA-256 digest of the input, rendered as 64 lowercase hex characters.
std::string sha256_hex(std::string_view data);

} // namespace ttc::util
