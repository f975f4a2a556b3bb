#include <charconv>
#include <cstdio>
#include <utility>

#include "parlframe/corpus.hpp"
#include "parlframe/text.hpp"

namespace parlframe {

namespace {

struct PartyVariant {
  std::string_view spelling;  // normalized: lowercase, single spaces
  PartyId id;
};

// Raw spellings found in the protocols. Canonical codes are listed too so
// normalization is idempotent.
constexpr PartyVariant kPartyVariants[] = {
    {"afd", PartyId::AfD},
    {"alternative für deutschland", PartyId::AfD},
    {"dielinke", PartyId::DieLinke},
    {"die linke", PartyId::DieLinke},
    {"die linke.", PartyId::DieLinke},
    {"linke", PartyId::DieLinke},
    {"linksfraktion", PartyId::DieLinke},
    {"gruppe die linke", PartyId::DieLinke},
    {"pds", PartyId::DieLinke},
    {"gruppe der pds", PartyId::DieLinke},
    {"pds/ll", PartyId::DieLinke},
    {"pds/linke liste", PartyId::DieLinke},
    {"gruene", PartyId::Gruene},
    {"grüne", PartyId::Gruene},
    {"die grünen", PartyId::Gruene},
    {"bündnis 90/die grünen", PartyId::Gruene},
    {"bündnis 90/grüne", PartyId::Gruene},
    {"bündnis 90 / die grünen", PartyId::Gruene},
    {"bündnis 90", PartyId::Gruene},
    {"cducsu", PartyId::CDUCSU},
    {"cdu/csu", PartyId::CDUCSU},
    {"cdu", PartyId::CDUCSU},
    {"csu", PartyId::CDUCSU},
    {"spd", PartyId::SPD},
    {"fdp", PartyId::FDP},
    {"f.d.p.", PartyId::FDP},
    {"fdp/dvp", PartyId::FDP},
    {"dp", PartyId::DP},
    {"dp/dpb", PartyId::DP},
    {"dp/fvp", PartyId::DP},
    {"fvp", PartyId::DP},
    {"dpb", PartyId::DP},
    {"gbbhe", PartyId::GBBHE},
    {"gb/bhe", PartyId::GBBHE},
    {"gb-bhe", PartyId::GBBHE},
    {"bhe", PartyId::GBBHE},
    {"kpd", PartyId::KPD},
    {"bp", PartyId::BP},
    {"bayernpartei", PartyId::BP},
    {"wav", PartyId::WAV},
    {"drp", PartyId::DRP},
    {"dzp", PartyId::DZP},
    {"deutsche zentrumspartei", PartyId::DZP},
    {"z", PartyId::Z},
    {"zentrum", PartyId::Z},
};

int to_int(std::string_view s, bool& ok) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  ok = ec == std::errc() && p == s.data() + s.size();
  return v;
}

}  // namespace

bool is_valid_date(int year, int month, int day) {
  if (year < 1 || month < 1 || month > 12 || day < 1) return false;
  static constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  const int limit = days[month - 1] + (month == 2 && leap ? 1 : 0);
  return day <= limit;
}

std::optional<Date> Date::parse(std::string_view s) {
  s = text::trim(s);
  bool ok_y = false, ok_m = false, ok_d = false;
  Date d;
  if (s.size() == 10 && s[4] == '-' && s[7] == '-') {
    d.year = to_int(s.substr(0, 4), ok_y);
    d.month = to_int(s.substr(5, 2), ok_m);
    d.day = to_int(s.substr(8, 2), ok_d);
  } else if (s.size() == 10 && s[2] == '.' && s[5] == '.') {
    d.day = to_int(s.substr(0, 2), ok_d);
    d.month = to_int(s.substr(3, 2), ok_m);
    d.year = to_int(s.substr(6, 4), ok_y);
  } else {
    return std::nullopt;
  }
  if (!(ok_y && ok_m && ok_d) || !is_valid_date(d.year, d.month, d.day)) return std::nullopt;
  return d;
}

std::string Date::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
  return buf;
}

PartyId normalize_party(std::string_view raw) {
  std::string key = text::to_lower(text::collapse_whitespace(raw));
  while (!key.empty() && (key.front() == '(' || key.front() == '[')) key.erase(key.begin());
  while (!key.empty() && (key.back() == ')' || key.back() == ']' || key.back() == ':')) key.pop_back();
  for (const auto& v : kPartyVariants)
    if (v.spelling == key) return v.id;
  // "DIE LINKE." and similar trailing-period spellings
  if (!key.empty() && key.back() == '.') {
    key.pop_back();
    for (const auto& v : kPartyVariants)
      if (v.spelling == key) return v.id;
  }
  return PartyId::Unknown;
}

std::string_view to_string(PartyId p) {
  static constexpr std::string_view names[] = {"AfD", "DieLinke", "Gruene", "CDUCSU", "SPD",
                                               "FDP", "DP",       "GBBHE",  "KPD",    "BP",
                                               "WAV", "DRP",      "DZP",    "Z",      "Unknown"};
  return names[static_cast<int>(p)];
}

std::size_t Protocol::sentence_count() const {
  std::size_t n = 0;
  for (const auto& sp : speeches) n += sp.sentences.size();
  return n;
}

IngestError::IngestError(Kind kind, std::string detail, std::string field)
    : std::runtime_error(std::move(detail)), kind_(kind), field_(std::move(field)) {}

std::optional<XmlDialect> parse_dialect(std::string_view name) {
  const std::string key = text::to_lower(text::trim(name));
  if (key == "modern") return XmlDialect::Modern;
  if (key == "legacy") return XmlDialect::Legacy;
  return std::nullopt;
}

std::vector<AttributedSentence> assign_speakers(std::span<const std::string> sentences,
                                                std::span<const SpeakerMarker> markers) {
  std::vector<AttributedSentence> out;
  out.reserve(sentences.size());
  std::size_t next_marker = 0;
  int current = -1;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    while (next_marker < markers.size() && markers[next_marker].position <= i) current = static_cast<int>(next_marker++);
    AttributedSentence a;
    a.text = sentences[i];
    a.marker = current;
    if (current >= 0) {
      a.speaker = markers[static_cast<std::size_t>(current)].speaker;
      a.party = markers[static_cast<std::size_t>(current)].party;
    } else {
      a.speaker = std::string(kUnknownSpeaker);
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<SentenceRecord> flatten(const Protocol& protocol) {
  std::vector<SentenceRecord> rows;
  rows.reserve(protocol.sentence_count());
  for (std::size_t sp = 0; sp < protocol.speeches.size(); ++sp) {
    const Speech& speech = protocol.speeches[sp];
    for (const Sentence& s : speech.sentences) {
      SentenceRecord r;
      r.protocol_id = protocol.source_id;
      r.date = protocol.date;
      r.session = protocol.session_number;
      r.period = protocol.legislative_period;
      r.speech_idx = static_cast<int>(sp);
      r.sentence_idx = s.index_in_speech;
      r.global_idx = s.global_index;
      r.speaker = speech.speaker_name;
      r.party = speech.party;
      r.text = s.text;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

void to_json(nlohmann::json& j, const SentenceRecord& r) {
  j = nlohmann::json{{"protocol_id", r.protocol_id}, {"date", r.date.iso()},       {"session", r.session},
                     {"period", r.period},           {"speech_idx", r.speech_idx}, {"sentence_idx", r.sentence_idx},
                     {"global_idx", r.global_idx},   {"speaker", r.speaker},       {"party", to_string(r.party)},
                     {"text", r.text}};
}

void from_json(const nlohmann::json& j, SentenceRecord& r) {
  r.protocol_id = j.at("protocol_id").get<std::string>();
  auto date = Date::parse(j.at("date").get<std::string>());
  if (!date) throw std::invalid_argument("invalid date in sentence record: " + j.at("date").dump());
  r.date = *date;
  r.session = j.at("session").get<int>();
  r.period = j.at("period").get<int>();
  r.speech_idx = j.at("speech_idx").get<int>();
  r.sentence_idx = j.at("sentence_idx").get<int>();
  r.global_idx = j.at("global_idx").get<int>();
  r.speaker = j.at("speaker").get<std::string>();
  r.party = normalize_party(j.at("party").get<std::string>());
  r.text = j.at("text").get<std::string>();
}

}  // namespace parlframe
