#pragma once

// Plenary-protocol ingestion: XML (two markup dialects) to dated, speaker-
// and party-attributed sentences. Dialect samples are in docs/xml_formats.md.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace parlframe {

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;

  /// Accepts ISO "YYYY-MM-DD" and German "DD.MM.YYYY"; rejects impossible dates.
  static std::optional<Date> parse(std::string_view text);
  std::string iso() const;
  auto operator<=>(const Date&) const = default;
};

bool is_valid_date(int year, int month, int day);

enum class PartyId : std::uint8_t {
  AfD, DieLinke, Gruene, CDUCSU, SPD, FDP, DP, GBBHE, KPD, BP, WAV, DRP, DZP, Z, Unknown,
};

/// Table-driven, case- and whitespace-insensitive. Unmatched input maps to
/// Unknown; canonical codes map to themselves.
PartyId normalize_party(std::string_view raw);
std::string_view to_string(PartyId p);

struct Sentence {
  std::string text;
  int index_in_speech = 0;
  int global_index = 0;
};

struct Speech {
  std::string speaker_name;
  PartyId party = PartyId::Unknown;
  std::vector<Sentence> sentences;
};

struct Protocol {
  Date date;
  int session_number = 0;
  int legislative_period = 0;
  std::string source_id;
  std::vector<Speech> speeches;

  std::size_t sentence_count() const;
};

enum class XmlDialect { Modern, Legacy };

std::optional<XmlDialect> parse_dialect(std::string_view name);

/// Guesses the dialect from the root element (dbtplenarprotokoll => modern).
std::optional<XmlDialect> detect_dialect(std::string_view xml);

class IngestError : public std::runtime_error {
 public:
  enum class Kind { MalformedXml, MissingMetadata };
  IngestError(Kind kind, std::string detail, std::string field = {});
  Kind kind() const noexcept { return kind_; }
  /// Name of the missing field for MissingMetadata.
  const std::string& field() const noexcept { return field_; }

 private:
  Kind kind_;
  std::string field_;
};

/// Parses one protocol. `source_id` overrides any id found in the document;
/// when both are absent the id is "WP<period>-<session>".
Protocol parse_protocol(std::string_view xml, XmlDialect dialect, std::string source_id = {});

/// A speaker change that applies from sentence `position` onwards.
struct SpeakerMarker {
  std::size_t position = 0;
  std::string speaker;
  PartyId party = PartyId::Unknown;
};

struct AttributedSentence {
  std::string text;
  std::string speaker;
  PartyId party = PartyId::Unknown;
  /// Index into the marker list, or -1 before the first marker.
  int marker = -1;
};

inline constexpr std::string_view kUnknownSpeaker = "Unknown";

/// Every sentence takes the most recent preceding marker; sentences before
/// the first marker get speaker "Unknown". Markers must be sorted by position.
std::vector<AttributedSentence> assign_speakers(std::span<const std::string> sentences,
                                                std::span<const SpeakerMarker> markers);

/// Rule-based German sentence splitter. Abbreviations come from a frozen list;
/// single letters, Roman numerals and short ordinals ("1. Mai") never end a
/// sentence.
class SentenceSegmenter {
 public:
  explicit SentenceSegmenter(std::vector<std::string> abbreviations);

  /// Segmenter loaded with the bundled data/abbreviations_de.txt.
  static const SentenceSegmenter& german();

  std::vector<std::string> split(std::string_view text) const;

 private:
  bool is_abbreviation(std::string_view token) const;
  std::vector<std::string> abbreviations_;  // sorted
};

std::vector<std::string> segment_sentences(std::string_view text);

/// Parses an abbreviation file: one entry per line, '#' comments.
std::vector<std::string> parse_word_list(std::string_view content);

/// One row of the protocol JSONL artifact.
struct SentenceRecord {
  std::string protocol_id;
  Date date;
  int session = 0;
  int period = 0;
  int speech_idx = 0;
  int sentence_idx = 0;
  int global_idx = 0;
  std::string speaker;
  PartyId party = PartyId::Unknown;
  std::string text;
};

std::vector<SentenceRecord> flatten(const Protocol& protocol);

void to_json(nlohmann::json& j, const SentenceRecord& r);
void from_json(const nlohmann::json& j, SentenceRecord& r);

}  // namespace parlframe
