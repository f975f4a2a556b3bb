#pragma once

// Label space for (anti-)solidarity framing.
//
// Canonical strings (used in every JSONL/CSV artifact):
//   high level   solidarity | anti-solidarity | mixed | none
//   subtypes     group-based | exchange-based | compassionate | empathic
//   fine labels  <stance>:<subtype>, mixed, none, and the gold-only forms
//                solidarity:unspecified, anti-solidarity:unspecified
//
// The accepted aliases (English and German) live in src/taxonomy.cpp.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace parlframe {

enum class HighLevel : std::uint8_t { Solidarity, AntiSolidarity, Mixed, None };

enum class Subtype : std::uint8_t { GroupBased, ExchangeBased, Compassionate, Empathic };

enum class TargetGroup : std::uint8_t { Migrant, Woman };

/// Ten model-facing classes followed by the two gold-only "no subtype" rows.
enum class FineLabel : std::uint8_t {
  SolidarityGroupBased,
  SolidarityExchangeBased,
  SolidarityCompassionate,
  SolidarityEmpathic,
  AntiSolidarityGroupBased,
  AntiSolidarityExchangeBased,
  AntiSolidarityCompassionate,
  AntiSolidarityEmpathic,
  Mixed,
  None,
  SolidarityNoSubtype,
  AntiSolidarityNoSubtype,
};

inline constexpr std::array<HighLevel, 4> kHighLevels = {HighLevel::Solidarity, HighLevel::AntiSolidarity,
                                                         HighLevel::Mixed, HighLevel::None};

inline constexpr std::array<Subtype, 4> kSubtypes = {Subtype::GroupBased, Subtype::ExchangeBased,
                                                     Subtype::Compassionate, Subtype::Empathic};

inline constexpr std::array<FineLabel, 10> kModelFineLabels = {
    FineLabel::SolidarityGroupBased,        FineLabel::SolidarityExchangeBased,
    FineLabel::SolidarityCompassionate,     FineLabel::SolidarityEmpathic,
    FineLabel::AntiSolidarityGroupBased,    FineLabel::AntiSolidarityExchangeBased,
    FineLabel::AntiSolidarityCompassionate, FineLabel::AntiSolidarityEmpathic,
    FineLabel::Mixed,                       FineLabel::None,
};

inline constexpr std::array<FineLabel, 12> kAllFineLabels = {
    FineLabel::SolidarityGroupBased,        FineLabel::SolidarityExchangeBased,
    FineLabel::SolidarityCompassionate,     FineLabel::SolidarityEmpathic,
    FineLabel::AntiSolidarityGroupBased,    FineLabel::AntiSolidarityExchangeBased,
    FineLabel::AntiSolidarityCompassionate, FineLabel::AntiSolidarityEmpathic,
    FineLabel::Mixed,                       FineLabel::None,
    FineLabel::SolidarityNoSubtype,         FineLabel::AntiSolidarityNoSubtype,
};

inline constexpr std::array<TargetGroup, 2> kTargetGroups = {TargetGroup::Migrant, TargetGroup::Woman};

HighLevel fine_to_high(FineLabel label);
std::optional<Subtype> subtype_of(FineLabel label);
bool is_model_facing(FineLabel label);

/// True for the two stances that carry a subtype.
constexpr bool is_stance(HighLevel h) { return h == HighLevel::Solidarity || h == HighLevel::AntiSolidarity; }

/// Builds a fine label from the two-step answer. A subtype is required for
/// solidarity/anti-solidarity and forbidden for mixed/none; a missing subtype
/// on a stance yields the gold-only NoSubtype label only if `allow_unspecified`.
std::optional<FineLabel> combine(HighLevel high, std::optional<Subtype> subtype, bool allow_unspecified = false);

std::string_view to_string(HighLevel h);
std::string_view to_string(Subtype s);
std::string_view to_string(FineLabel f);
std::string_view to_string(TargetGroup t);

/// Human-readable form used in report tables ("Compassionate Solidarity").
std::string display_name(FineLabel f);

class UnknownLabel : public std::runtime_error {
 public:
  explicit UnknownLabel(std::string text)
      : std::runtime_error("unknown label: \"" + text + "\""), text_(std::move(text)) {}
  const std::string& text() const noexcept { return text_; }

 private:
  std::string text_;
};

// Case-insensitive, whitespace-tolerant parsing against the alias table.
// Unknown strings are rejected, never coerced.
std::optional<HighLevel> try_parse_high(std::string_view text);
std::optional<Subtype> try_parse_subtype(std::string_view text);
/// A bare subtype ("compassionate") resolves only when `stance` is given.
std::optional<FineLabel> try_parse_fine(std::string_view text, std::optional<HighLevel> stance = std::nullopt);
std::optional<TargetGroup> try_parse_target(std::string_view text);

HighLevel parse_high(std::string_view text);
Subtype parse_subtype(std::string_view text);
FineLabel parse_fine(std::string_view text, std::optional<HighLevel> stance = std::nullopt);
TargetGroup parse_target(std::string_view text);

struct HighAlias {
  std::string_view text;
  HighLevel label;
};
struct SubtypeAlias {
  std::string_view text;
  Subtype label;
};
/// Alias tables in normalized spelling; exposed for free-text answer scanning.
std::span<const HighAlias> high_aliases();
std::span<const SubtypeAlias> subtype_aliases();

/// Normalized spelling used for alias lookup: lowercase, trimmed, inner
/// whitespace collapsed, '_' treated as '-'.
std::string normalize_label_text(std::string_view text);

}  // namespace parlframe
