#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tmd {

std::string trim(std::string_view s);
std::string trim_right(std::string_view s);
std::string to_lower(std::string_view s);

/// Unicode NFC form of UTF-8 text. Invalid UTF-8 is returned unchanged.
std::string nfc_normalize(std::string_view utf8);

/// True if `needle` occurs in `haystack` bounded by non-alphanumeric characters.
/// Both are compared case-insensitively.
bool contains_word(std::string_view haystack, std::string_view needle);

/// Position of the first word-bounded occurrence, or npos.
std::size_t find_word(std::string_view haystack, std::string_view needle);

std::vector<std::string> split(std::string_view s, char sep);

/// Time-ordered 26-character identifier (48-bit ms timestamp + 80 random bits,
/// Crockford base32). Monotonic within a process.
std::string make_ulid();

}  // namespace tmd
