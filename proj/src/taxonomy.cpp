#include "parlframe/taxonomy.hpp"

#include "parlframe/text.hpp"

namespace parlframe {

namespace {

// Alias table. Every entry is in normalized spelling (see normalize_label_text).
constexpr HighAlias kHighAliases[] = {
    {"solidarity", HighLevel::Solidarity},
    {"solidarität", HighLevel::Solidarity},
    {"solidaritaet", HighLevel::Solidarity},
    {"anti-solidarity", HighLevel::AntiSolidarity},
    {"anti solidarity", HighLevel::AntiSolidarity},
    {"antisolidarity", HighLevel::AntiSolidarity},
    {"anti-solidarität", HighLevel::AntiSolidarity},
    {"antisolidarität", HighLevel::AntiSolidarity},
    {"anti-solidaritaet", HighLevel::AntiSolidarity},
    {"antisolidaritaet", HighLevel::AntiSolidarity},
    {"mixed", HighLevel::Mixed},
    {"mixed stance", HighLevel::Mixed},
    {"gemischt", HighLevel::Mixed},
    {"ambivalent", HighLevel::Mixed},
    {"none", HighLevel::None},
    {"keine", HighLevel::None},
    {"neutral", HighLevel::None},
};

constexpr SubtypeAlias kSubtypeAliases[] = {
    {"group-based", Subtype::GroupBased},
    {"group based", Subtype::GroupBased},
    {"groupbased", Subtype::GroupBased},
    {"gruppenbasiert", Subtype::GroupBased},
    {"gruppenbasierte", Subtype::GroupBased},
    {"exchange-based", Subtype::ExchangeBased},
    {"exchange based", Subtype::ExchangeBased},
    {"exchangebased", Subtype::ExchangeBased},
    {"austauschbasiert", Subtype::ExchangeBased},
    {"austauschbasierte", Subtype::ExchangeBased},
    {"compassionate", Subtype::Compassionate},
    {"mitfühlend", Subtype::Compassionate},
    {"mitfühlende", Subtype::Compassionate},
    {"empathic", Subtype::Empathic},
    {"empathetic", Subtype::Empathic},
    {"empathisch", Subtype::Empathic},
    {"empathische", Subtype::Empathic},
};

constexpr std::string_view kUnspecifiedAliases[] = {
    "unspecified", "no subtype", "no-subtype", "ohne subtyp", "unbestimmt",
};

template <typename Alias>
auto lookup(std::span<const Alias> table, std::string_view key) -> std::optional<decltype(Alias::label)> {
  for (const auto& a : table)
    if (a.text == key) return a.label;
  return std::nullopt;
}

bool is_unspecified(std::string_view key) {
  for (auto a : kUnspecifiedAliases)
    if (a == key) return true;
  return false;
}

std::optional<FineLabel> stance_with(HighLevel stance, std::string_view subtype_key) {
  if (!is_stance(stance)) return std::nullopt;
  if (is_unspecified(subtype_key)) return combine(stance, std::nullopt, true);
  if (auto st = lookup(std::span<const SubtypeAlias>(kSubtypeAliases), subtype_key)) return combine(stance, st);
  return std::nullopt;
}

}  // namespace

std::span<const HighAlias> high_aliases() { return kHighAliases; }
std::span<const SubtypeAlias> subtype_aliases() { return kSubtypeAliases; }

HighLevel fine_to_high(FineLabel label) {
  switch (label) {
    case FineLabel::SolidarityGroupBased:
    case FineLabel::SolidarityExchangeBased:
    case FineLabel::SolidarityCompassionate:
    case FineLabel::SolidarityEmpathic:
    case FineLabel::SolidarityNoSubtype:
      return HighLevel::Solidarity;
    case FineLabel::AntiSolidarityGroupBased:
    case FineLabel::AntiSolidarityExchangeBased:
    case FineLabel::AntiSolidarityCompassionate:
    case FineLabel::AntiSolidarityEmpathic:
    case FineLabel::AntiSolidarityNoSubtype:
      return HighLevel::AntiSolidarity;
    case FineLabel::Mixed:
      return HighLevel::Mixed;
    case FineLabel::None:
      return HighLevel::None;
  }
  return HighLevel::None;
}

std::optional<Subtype> subtype_of(FineLabel label) {
  const auto i = static_cast<int>(label);
  if (i < 8) return static_cast<Subtype>(i % 4);
  return std::nullopt;
}

bool is_model_facing(FineLabel label) { return static_cast<int>(label) < 10; }

std::optional<FineLabel> combine(HighLevel high, std::optional<Subtype> subtype, bool allow_unspecified) {
  switch (high) {
    case HighLevel::Mixed:
      return subtype ? std::nullopt : std::optional(FineLabel::Mixed);
    case HighLevel::None:
      return subtype ? std::nullopt : std::optional(FineLabel::None);
    case HighLevel::Solidarity:
    case HighLevel::AntiSolidarity: {
      const int base = high == HighLevel::Solidarity ? 0 : 4;
      if (subtype) return static_cast<FineLabel>(base + static_cast<int>(*subtype));
      if (!allow_unspecified) return std::nullopt;
      return high == HighLevel::Solidarity ? FineLabel::SolidarityNoSubtype : FineLabel::AntiSolidarityNoSubtype;
    }
  }
  return std::nullopt;
}

std::string_view to_string(HighLevel h) {
  switch (h) {
    case HighLevel::Solidarity: return "solidarity";
    case HighLevel::AntiSolidarity: return "anti-solidarity";
    case HighLevel::Mixed: return "mixed";
    case HighLevel::None: return "none";
  }
  return "none";
}

std::string_view to_string(Subtype s) {
  switch (s) {
    case Subtype::GroupBased: return "group-based";
    case Subtype::ExchangeBased: return "exchange-based";
    case Subtype::Compassionate: return "compassionate";
    case Subtype::Empathic: return "empathic";
  }
  return "group-based";
}

std::string_view to_string(FineLabel f) {
  static constexpr std::string_view names[] = {
      "solidarity:group-based",      "solidarity:exchange-based",      "solidarity:compassionate",
      "solidarity:empathic",         "anti-solidarity:group-based",    "anti-solidarity:exchange-based",
      "anti-solidarity:compassionate", "anti-solidarity:empathic",     "mixed",
      "none",                        "solidarity:unspecified",         "anti-solidarity:unspecified",
  };
  return names[static_cast<int>(f)];
}

std::string_view to_string(TargetGroup t) { return t == TargetGroup::Migrant ? "migrant" : "woman"; }

std::string display_name(FineLabel f) {
  static constexpr std::string_view subtype_names[] = {"Group-based", "Exchange-based", "Compassionate", "Empathic"};
  const HighLevel high = fine_to_high(f);
  if (!is_stance(high)) return f == FineLabel::Mixed ? "Mixed" : "None";
  const std::string stance = high == HighLevel::Solidarity ? "Solidarity" : "Anti-solidarity";
  if (auto st = subtype_of(f)) return std::string(subtype_names[static_cast<int>(*st)]) + " " + stance;
  return stance + " (no subtype)";
}

std::string normalize_label_text(std::string_view text) {
  std::string out = text::to_lower(text::collapse_whitespace(text));
  for (auto& c : out)
    if (c == '_') c = '-';
  // Tolerate whitespace around the stance/subtype separator.
  std::string compact;
  compact.reserve(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] == ' ' && ((i + 1 < out.size() && out[i + 1] == ':') || (!compact.empty() && compact.back() == ':')))
      continue;
    compact.push_back(out[i]);
  }
  return compact;
}

std::optional<HighLevel> try_parse_high(std::string_view text) {
  return lookup(high_aliases(), normalize_label_text(text));
}

std::optional<Subtype> try_parse_subtype(std::string_view text) {
  return lookup(subtype_aliases(), normalize_label_text(text));
}

std::optional<FineLabel> try_parse_fine(std::string_view text, std::optional<HighLevel> stance) {
  const std::string key = normalize_label_text(text);
  if (key.empty()) return std::nullopt;

  // "<stance>:<subtype>"
  if (auto colon = key.find(':'); colon != std::string::npos) {
    auto high = lookup(high_aliases(), std::string_view(key).substr(0, colon));
    if (!high) return std::nullopt;
    return stance_with(*high, std::string_view(key).substr(colon + 1));
  }

  if (auto high = lookup(high_aliases(), key)) {
    if (*high == HighLevel::Mixed) return FineLabel::Mixed;
    if (*high == HighLevel::None) return FineLabel::None;
    return std::nullopt;  // a bare stance is not a fine label
  }

  // "<stance> (<subtype>)", e.g. "solidarity (no subtype)"
  if (auto open = key.find(" ("); open != std::string::npos && key.back() == ')') {
    auto high = lookup(high_aliases(), std::string_view(key).substr(0, open));
    if (!high) return std::nullopt;
    return stance_with(*high, std::string_view(key).substr(open + 2, key.size() - open - 3));
  }

  // "<subtype> <stance>", e.g. "compassionate solidarity"
  for (const auto& st : subtype_aliases()) {
    if (key.size() > st.text.size() + 1 && key.starts_with(st.text) && key[st.text.size()] == ' ') {
      if (auto high = lookup(high_aliases(), std::string_view(key).substr(st.text.size() + 1)); high && is_stance(*high))
        return combine(*high, st.label);
    }
  }

  if (stance && is_stance(*stance)) return stance_with(*stance, key);
  return std::nullopt;
}

std::optional<TargetGroup> try_parse_target(std::string_view text) {
  const std::string key = normalize_label_text(text);
  if (key == "migrant" || key == "migrants" || key == "migranten") return TargetGroup::Migrant;
  if (key == "woman" || key == "women" || key == "frau" || key == "frauen") return TargetGroup::Woman;
  return std::nullopt;
}

HighLevel parse_high(std::string_view text) {
  if (auto v = try_parse_high(text)) return *v;
  throw UnknownLabel(std::string(text));
}

Subtype parse_subtype(std::string_view text) {
  if (auto v = try_parse_subtype(text)) return *v;
  throw UnknownLabel(std::string(text));
}

FineLabel parse_fine(std::string_view text, std::optional<HighLevel> stance) {
  if (auto v = try_parse_fine(text, stance)) return *v;
  throw UnknownLabel(std::string(text));
}

TargetGroup parse_target(std::string_view text) {
  if (auto v = try_parse_target(text)) return *v;
  throw UnknownLabel(std::string(text));
}

}  // namespace parlframe
