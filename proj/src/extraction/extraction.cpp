#include "parlframe/extraction.hpp"

#include <cstdint>
#include <iterator>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "parlframe/embedded_data.hpp"
#include "parlframe/hash.hpp"

namespace parlframe {

namespace {

struct SpeechRange {
  std::size_t begin;
  std::size_t end;
};

std::vector<SpeechRange> speech_ranges(std::span<const SentenceRecord> records) {
  std::vector<SpeechRange> ranges;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= records.size(); ++i) {
    if (i == records.size() || records[i].protocol_id != records[begin].protocol_id ||
        records[i].speech_idx != records[begin].speech_idx) {
      if (i > begin) ranges.push_back({begin, i});
      begin = i;
    }
  }
  return ranges;
}

Instance make_instance(std::span<const SentenceRecord> speech, std::size_t pos, std::vector<KeywordHit> hits,
                       TargetGroup target) {
  const SentenceRecord& r = speech[pos];
  Instance inst;
  inst.id = instance_id(r.protocol_id, r.global_idx, target);
  inst.target = target;
  inst.keyword = hits.front().keyword;
  for (auto& h : hits) inst.keywords.push_back(std::move(h.keyword));
  inst.text = r.text;
  const std::size_t left_begin = pos >= kContextWindow ? pos - kContextWindow : 0;
  for (std::size_t i = left_begin; i < pos; ++i) inst.context_left.push_back(speech[i].text);
  const std::size_t right_end = std::min(speech.size(), pos + 1 + kContextWindow);
  for (std::size_t i = pos + 1; i < right_end; ++i) inst.context_right.push_back(speech[i].text);
  inst.date = r.date;
  inst.year = r.date.year;
  inst.decade = decade_of(r.date.year);
  inst.speaker = r.speaker;
  inst.party = r.party;
  inst.protocol_id = r.protocol_id;
  inst.session = r.session;
  inst.period = r.period;
  inst.speech_idx = r.speech_idx;
  inst.sentence_idx = r.sentence_idx;
  inst.global_idx = r.global_idx;
  return inst;
}

void extract_speech(std::span<const SentenceRecord> speech, const KeywordSet& ks, std::vector<Instance>& out) {
  for (std::size_t i = 0; i < speech.size(); ++i) {
    auto hits = match_keywords(speech[i].text, ks);
    if (!hits.empty()) out.push_back(make_instance(speech, i, std::move(hits), ks.target));
  }
}

}  // namespace

KeywordSet KeywordSet::bundled(TargetGroup target) {
  return from_text(target, target == TargetGroup::Migrant ? data::keywords_migrant() : data::keywords_woman());
}

KeywordSet KeywordSet::from_text(TargetGroup target, std::string_view content) {
  KeywordSet ks;
  ks.target = target;
  ks.keywords = parse_word_list(content);
  if (target == TargetGroup::Woman) ks.special_rules.emplace_back(kFrauRule);
  return ks;
}

KeywordSet KeywordSet::load(TargetGroup target, const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read keyword file " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(target, buf.str());
}

bool KeywordSet::has_rule(std::string_view rule) const {
  return std::find(special_rules.begin(), special_rules.end(), rule) != special_rules.end();
}

FrauDecision frau_rule(std::string_view sentence, std::span<const text::Token> tokens, std::size_t position) {
  if (position + 1 >= tokens.size()) return FrauDecision::Keep;
  const text::Token& frau = tokens[position];
  const text::Token& next = tokens[position + 1];
  // Only whitespace may separate the two words; "Frau, Mutter" keeps "Frau".
  std::string_view gap = sentence.substr(frau.end, next.begin - frau.end);
  if (gap.empty() || !text::trim(gap).empty()) return FrauDecision::Keep;
  return text::starts_upper(next.view(sentence)) ? FrauDecision::Drop : FrauDecision::Keep;
}

std::vector<KeywordHit> match_keywords(std::string_view sentence, const KeywordSet& ks) {
  const auto tokens = text::letter_tokens(sentence);
  const bool frau_rule_on = ks.has_rule(kFrauRule);
  std::vector<KeywordHit> hits;
  for (std::size_t k = 0; k < ks.keywords.size(); ++k) {
    const std::string& kw = ks.keywords[k];
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (tokens[t].view(sentence) != kw) continue;
      if (frau_rule_on && kw == "Frau" && frau_rule(sentence, tokens, t) == FrauDecision::Drop) continue;
      hits.push_back({kw, k, tokens[t].begin});
      break;
    }
  }
  return hits;
}

std::string instance_id(std::string_view protocol_id, int global_idx, TargetGroup target) {
  std::string key(protocol_id);
  key += '\x1f';
  key += std::to_string(global_idx);
  key += '\x1f';
  key += to_string(target);
  return short_hash(key);
}

std::vector<Instance> serial::build_instances(std::span<const SentenceRecord> records, const KeywordSet& ks) {
  std::vector<Instance> out;
  for (const auto& r : speech_ranges(records)) extract_speech(records.subspan(r.begin, r.end - r.begin), ks, out);
  return out;
}

std::vector<Instance> build_instances(std::span<const SentenceRecord> records, const KeywordSet& ks) {
  const auto ranges = speech_ranges(records);
  std::vector<std::vector<Instance>> per_speech(ranges.size());
  const auto n = static_cast<std::int64_t>(ranges.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& r = ranges[static_cast<std::size_t>(i)];
    extract_speech(records.subspan(r.begin, r.end - r.begin), ks, per_speech[static_cast<std::size_t>(i)]);
  }
  std::vector<Instance> out;
  for (auto& v : per_speech) std::move(v.begin(), v.end(), std::back_inserter(out));
  return out;
}

std::map<std::string, std::vector<YearShare>> keyword_distribution(std::span<const Instance> instances,
                                                                   const KeywordSet& ks) {
  std::map<std::string, std::map<int, long>> counts;
  for (const auto& kw : ks.keywords) counts[kw];
  for (const auto& inst : instances)
    for (const auto& kw : inst.keywords) ++counts[kw][inst.year];

  std::map<std::string, std::vector<YearShare>> out;
  for (const auto& [kw, by_year] : counts) {
    long total = 0;
    for (const auto& [y, c] : by_year) total += c;
    auto& series = out[kw];
    for (const auto& [y, c] : by_year)
      series.push_back({y, c, 100.0 * static_cast<double>(c) / static_cast<double>(total)});
  }
  return out;
}

std::map<int, YearStats> corpus_stats(std::span<const SentenceRecord> records, std::span<const Instance> instances) {
  std::map<int, YearStats> stats;
  for (const auto& r : records) ++stats[r.date.year].sentences;
  for (const auto& inst : instances) ++stats[inst.year].instances[inst.target];
  for (auto& [year, s] : stats) {
    for (TargetGroup t : kTargetGroups) {
      const long n = s.instances[t];
      s.share[t] = s.sentences > 0 ? static_cast<double>(n) / static_cast<double>(s.sentences) : 0.0;
    }
  }
  return stats;
}

void to_json(nlohmann::json& j, const Instance& inst) {
  j = nlohmann::json{
      {"id", inst.id},
      {"target", to_string(inst.target)},
      {"keyword", inst.keyword},
      {"keywords", inst.keywords},
      {"text", inst.text},
      {"context_left", inst.context_left},
      {"context_right", inst.context_right},
      {"date", inst.date.iso()},
      {"year", inst.year},
      {"decade", inst.decade},
      {"speaker", inst.speaker},
      {"party", to_string(inst.party)},
      {"protocol_id", inst.protocol_id},
      {"session", inst.session},
      {"period", inst.period},
      {"speech_idx", inst.speech_idx},
      {"sentence_idx", inst.sentence_idx},
      {"global_idx", inst.global_idx},
  };
}

void from_json(const nlohmann::json& j, Instance& inst) {
  inst.id = j.at("id").get<std::string>();
  inst.target = parse_target(j.at("target").get<std::string>());
  inst.keyword = j.at("keyword").get<std::string>();
  inst.keywords = j.value("keywords", std::vector<std::string>{inst.keyword});
  inst.text = j.at("text").get<std::string>();
  inst.context_left = j.value("context_left", std::vector<std::string>{});
  inst.context_right = j.value("context_right", std::vector<std::string>{});
  auto date = Date::parse(j.at("date").get<std::string>());
  if (!date) throw std::invalid_argument("invalid date in instance " + inst.id);
  inst.date = *date;
  inst.year = j.value("year", date->year);
  inst.decade = j.value("decade", decade_of(inst.year));
  inst.speaker = j.value("speaker", std::string(kUnknownSpeaker));
  inst.party = normalize_party(j.value("party", std::string("Unknown")));
  inst.protocol_id = j.value("protocol_id", std::string());
  inst.session = j.value("session", 0);
  inst.period = j.value("period", 0);
  inst.speech_idx = j.value("speech_idx", 0);
  inst.sentence_idx = j.value("sentence_idx", 0);
  inst.global_idx = j.value("global_idx", 0);
}

}  // namespace parlframe
