#pragma once

// UTF-8 helpers shared by the segmenter, keyword matcher and label parser.
// Only the Latin ranges that occur in German protocol text get case and
// letter semantics; everything else is treated as a non-letter.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace parlframe::text {

/// Decodes one code point starting at `pos`; advances `pos`. Invalid bytes
/// decode to U+FFFD and consume a single byte.
char32_t decode_utf8(std::string_view s, std::size_t& pos);

void append_utf8(std::string& out, char32_t cp);

bool is_letter(char32_t cp);
bool is_upper(char32_t cp);
bool is_digit(char32_t cp);
bool is_space(char32_t cp);

char32_t to_lower(char32_t cp);
std::string to_lower(std::string_view s);

std::string_view trim(std::string_view s);

/// Trims and collapses every whitespace run into one ASCII space.
std::string collapse_whitespace(std::string_view s);

/// A maximal run of letters, as a byte range into the source string.
struct Token {
  std::size_t begin;
  std::size_t end;
  std::string_view view(std::string_view src) const { return src.substr(begin, end - begin); }
};

/// Letter-run tokenization: any transition between letter and non-letter is a
/// boundary, so "Ausländerbehörde" is one token and "Flüchtlings-Politik" two.
std::vector<Token> letter_tokens(std::string_view s);

/// True when the first code point of `s` is an uppercase letter.
bool starts_upper(std::string_view s);

}  // namespace parlframe::text
