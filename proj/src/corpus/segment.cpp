#include <algorithm>

#include "parlframe/corpus.hpp"
#include "parlframe/embedded_data.hpp"
#include "parlframe/text.hpp"

namespace parlframe {

namespace {

constexpr std::string_view kMonths[] = {
    "Januar", "Jänner", "Februar", "März", "April", "Mai", "Juni", "Juli",
    "August", "September", "Oktober", "November", "Dezember",
};

bool is_terminator(char32_t cp) { return cp == '.' || cp == '!' || cp == '?' || cp == 0x2026; }

bool is_closing(char32_t cp) {
  return cp == '"' || cp == '\'' || cp == ')' || cp == ']' || cp == 0x201C || cp == 0x201D || cp == 0x2019 ||
         cp == 0xBB || cp == 0xAB || cp == 0x203A || cp == 0x2039;
}

bool is_opening(char32_t cp) {
  return cp == '"' || cp == '\'' || cp == '(' || cp == '[' || cp == 0x201E || cp == 0x201C || cp == 0x201A ||
         cp == 0xBB || cp == 0xAB || cp == 0x203A || cp == 0x2039 || cp == '-' || cp == 0x2013 || cp == 0x2014;
}

bool is_roman_numeral(std::string_view tok) {
  if (tok.empty() || tok.size() > 5) return false;
  return std::all_of(tok.begin(), tok.end(), [](char c) { return c == 'I' || c == 'V' || c == 'X' || c == 'L'; });
}

bool all_digits(std::string_view tok) {
  return !tok.empty() && std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::size_t letter_count(std::string_view tok) {
  std::size_t n = 0, pos = 0;
  while (pos < tok.size()) {
    if (!text::is_letter(text::decode_utf8(tok, pos))) return 0;
    ++n;
  }
  return n;
}

// The whitespace-delimited word that starts at `pos`, without leading
// opening punctuation.
std::string_view word_at(std::string_view s, std::size_t pos) {
  std::size_t end = pos;
  while (end < s.size() && s[end] != ' ') ++end;
  std::string_view w = s.substr(pos, end - pos);
  while (!w.empty()) {
    std::size_t p = 0;
    const char32_t cp = text::decode_utf8(w, p);
    if (!is_opening(cp)) break;
    w.remove_prefix(p);
  }
  return w;
}

}  // namespace

std::vector<std::string> parse_word_list(std::string_view content) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t nl = content.find('\n', start);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = text::trim(content.substr(start, nl - start));
    if (!line.empty() && line.front() != '#') words.emplace_back(line);
    start = nl + 1;
  }
  return words;
}

SentenceSegmenter::SentenceSegmenter(std::vector<std::string> abbreviations) : abbreviations_(std::move(abbreviations)) {
  std::sort(abbreviations_.begin(), abbreviations_.end());
  abbreviations_.erase(std::unique(abbreviations_.begin(), abbreviations_.end()), abbreviations_.end());
}

const SentenceSegmenter& SentenceSegmenter::german() {
  static const SentenceSegmenter instance(parse_word_list(data::abbreviations_de()));
  return instance;
}

bool SentenceSegmenter::is_abbreviation(std::string_view token) const {
  return std::binary_search(abbreviations_.begin(), abbreviations_.end(), token,
                            [](std::string_view a, std::string_view b) { return a < b; });
}

std::vector<std::string> SentenceSegmenter::split(std::string_view input) const {
  const std::string s = text::collapse_whitespace(input);
  std::vector<std::string> out;
  std::size_t sentence_begin = 0;
  std::size_t pos = 0;

  while (pos < s.size()) {
    const std::size_t cp_begin = pos;
    const char32_t cp = text::decode_utf8(s, pos);
    if (!is_terminator(cp)) continue;

    const bool single_period = cp == '.' && (pos >= s.size() || !is_terminator(static_cast<unsigned char>(s[pos])));
    // Absorb runs of terminators and closing quotes/brackets.
    std::size_t end = pos;
    while (end < s.size()) {
      std::size_t p = end;
      const char32_t next = text::decode_utf8(s, p);
      if (!is_terminator(next) && !is_closing(next)) break;
      end = p;
    }
    pos = end;

    if (end < s.size() && s[end] != ' ') continue;  // "3.5", "z.B.", "S.1"
    if (end < s.size()) {
      // The next sentence must open with an uppercase letter, a digit or
      // opening punctuation followed by one of those.
      std::string_view next_word = word_at(s, end + 1);
      std::size_t p = 0;
      const char32_t first = next_word.empty() ? 0 : text::decode_utf8(next_word, p);
      if (!(text::is_upper(first) || text::is_digit(first))) continue;

      if (single_period) {
        // Token directly before the period.
        std::size_t tok_begin = cp_begin;
        while (tok_begin > sentence_begin && s[tok_begin - 1] != ' ') --tok_begin;
        std::string_view tok = word_at(std::string_view(s).substr(0, cp_begin), tok_begin);
        if (is_abbreviation(tok) || letter_count(tok) == 1 || is_roman_numeral(tok)) continue;
        if (all_digits(tok)) {
          std::string_view next = next_word.substr(0, next_word.find_first_of(",.;:!?"));
          const bool month_follows = std::find(std::begin(kMonths), std::end(kMonths), next) != std::end(kMonths);
          if (tok.size() <= 2 || month_follows) continue;
        }
      }
    }

    std::string_view sentence = text::trim(std::string_view(s).substr(sentence_begin, end - sentence_begin));
    if (!sentence.empty()) out.emplace_back(sentence);
    sentence_begin = end;
  }

  std::string_view rest = text::trim(std::string_view(s).substr(std::min(sentence_begin, s.size())));
  if (!rest.empty()) out.emplace_back(rest);
  return out;
}

std::vector<std::string> segment_sentences(std::string_view text) { return SentenceSegmenter::german().split(text); }

}  // namespace parlframe
