#pragma once

// Keyword-anchored instance extraction: one instance per keyword-bearing
// sentence, with up to three sentences of context on each side taken from the
// same speech.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "parlframe/corpus.hpp"
#include "parlframe/taxonomy.hpp"
#include "parlframe/text.hpp"

namespace parlframe {

inline constexpr std::string_view kFrauRule = "frau-not-before-capitalized";
inline constexpr int kContextWindow = 3;

struct KeywordSet {
  TargetGroup target = TargetGroup::Migrant;
  std::vector<std::string> keywords;
  std::vector<std::string> special_rules;

  /// The bundled list for the target (32 migrant terms, 18 woman terms).
  static KeywordSet bundled(TargetGroup target);
  /// One keyword per line; '#' starts a comment line.
  static KeywordSet from_text(TargetGroup target, std::string_view content);
  static KeywordSet load(TargetGroup target, const std::filesystem::path& file);

  bool has_rule(std::string_view rule) const;
};

struct KeywordHit {
  std::string keyword;
  std::size_t keyword_index = 0;  // position in KeywordSet::keywords
  std::size_t byte_offset = 0;    // first occurrence in the sentence
};

enum class FrauDecision { Keep, Drop };

/// `tokens[position]` must be the exact token "Frau". Drops it when the next
/// word, separated by whitespace only, starts with an uppercase letter.
FrauDecision frau_rule(std::string_view sentence, std::span<const text::Token> tokens, std::size_t position);

/// Case-sensitive whole-token matches, one hit per keyword, ordered by
/// keyword-list position.
std::vector<KeywordHit> match_keywords(std::string_view sentence, const KeywordSet& ks);

struct Instance {
  std::string id;
  TargetGroup target = TargetGroup::Migrant;
  std::string keyword;                // primary: first hit by list order
  std::vector<std::string> keywords;  // all hits, list order
  std::string text;
  std::vector<std::string> context_left;
  std::vector<std::string> context_right;
  Date date;
  int year = 0;
  int decade = 0;
  std::string speaker;
  PartyId party = PartyId::Unknown;
  std::string protocol_id;
  int session = 0;
  int period = 0;
  int speech_idx = 0;
  int sentence_idx = 0;
  int global_idx = 0;
};

constexpr int decade_of(int year) { return (year >= 0 ? year / 10 : (year - 9) / 10) * 10; }

std::string instance_id(std::string_view protocol_id, int global_idx, TargetGroup target);

/// Parallel over speeches; output order and ids are identical to the serial
/// reference. `records` must be grouped by protocol and speech, in document order.
std::vector<Instance> build_instances(std::span<const SentenceRecord> records, const KeywordSet& ks);

namespace serial {
std::vector<Instance> build_instances(std::span<const SentenceRecord> records, const KeywordSet& ks);
}

struct YearShare {
  int year = 0;
  long count = 0;
  double percent = 0.0;
};

/// Per keyword, yearly counts as a percentage of that keyword's total. Every
/// keyword of `ks` is present; unused ones have an empty series.
std::map<std::string, std::vector<YearShare>> keyword_distribution(std::span<const Instance> instances,
                                                                   const KeywordSet& ks);

struct YearStats {
  long sentences = 0;
  std::map<TargetGroup, long> instances;
  std::map<TargetGroup, double> share;  // instances / sentences
};

std::map<int, YearStats> corpus_stats(std::span<const SentenceRecord> records, std::span<const Instance> instances);

void to_json(nlohmann::json& j, const Instance& inst);
void from_json(const nlohmann::json& j, Instance& inst);

}  // namespace parlframe
