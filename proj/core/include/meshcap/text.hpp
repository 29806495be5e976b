#pragma once

#include <string>
#include <vector>

namespace meshcap {

// Unicode general categories P* (connector/dash/open/close/initial/final/other
// punctuation), via a compiled range table.
bool is_unicode_punct(char32_t cp);

// Unicode White_Space property.
bool is_unicode_space(char32_t cp);

// Strict UTF-8 <-> code point conversion; malformed input throws.
std::u32string utf8_decode(const std::string& s);
std::string utf8_encode(const std::u32string& s);
std::string utf8_encode_cp(char32_t cp);

// Caption normalizer, applied in this order:
//   1. delete punctuation code points
//   2. collapse runs of >2 identical code points to exactly 2
//   3. collapse whitespace runs to a single space
//   4. trim leading/trailing spaces
// Idempotent by construction.
std::string normalize_text(const std::string& s);

// Whitespace-split of a normalized string.
std::vector<std::string> split_tokens(const std::string& s);

}  // namespace meshcap
