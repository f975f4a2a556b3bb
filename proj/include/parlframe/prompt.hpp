#pragma once

// Classification prompts rendered from external templates. Templates use
// {PLACEHOLDER} syntax with the names TEXT, KEYWORD_SENTENCE, CONTEXT_LEFT,
// CONTEXT_RIGHT and EXAMPLES. Speaker and party metadata has no placeholder and
// never reaches a prompt.

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "parlframe/extraction.hpp"
#include "parlframe/taxonomy.hpp"

namespace parlframe {

enum class PromptStep { OneStep, HighLevel, SubtypeSolidarity, SubtypeAntiSolidarity };
enum class PromptFormat { OneStep, TwoStep };
enum class PromptMode { Zero, Few };

inline constexpr PromptStep kPromptSteps[] = {PromptStep::OneStep, PromptStep::HighLevel,
                                              PromptStep::SubtypeSolidarity, PromptStep::SubtypeAntiSolidarity};

std::string_view to_string(PromptStep s);    // "one_step", "high_level", ...
std::string_view to_string(PromptFormat f);  // "one-step", "two-step"
std::string_view to_string(PromptMode m);    // "zero", "few"
std::optional<PromptStep> parse_prompt_step(std::string_view s);
std::optional<PromptFormat> parse_prompt_format(std::string_view s);
std::optional<PromptMode> parse_prompt_mode(std::string_view s);

class PromptError : public std::runtime_error {
 public:
  enum class Kind { MissingExemplar, UnboundPlaceholder, MissingTemplate, InvalidTemplate };
  PromptError(Kind kind, std::string detail, const std::string& what)
      : std::runtime_error(what), kind_(kind), detail_(std::move(detail)) {}
  Kind kind() const noexcept { return kind_; }
  /// The missing label, placeholder name or template name.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Kind kind_;
  std::string detail_;
};

/// Canonical labels of a step's answer space, in the fixed order used for
/// exemplars and answer parsing. Subtype steps use "stance:subtype" forms.
std::vector<std::string> step_labels(PromptStep step);

struct PromptTemplate {
  TargetGroup target = TargetGroup::Migrant;
  PromptStep step = PromptStep::HighLevel;
  std::string body;
  bool cot = false;  // contains the "think step by step" cue

  /// Validates placeholder names; throws PromptError.
  static PromptTemplate from_text(TargetGroup target, PromptStep step, std::string body);
  std::vector<std::string> placeholders() const;
  /// File name under a template directory: "{target}_{step}.txt".
  static std::string file_name(TargetGroup target, PromptStep step);
};

struct Exemplar {
  std::string label;  // canonical label string as returned by step_labels
  std::string text;
  std::string rationale;
};

struct ExemplarSet {
  std::vector<Exemplar> items;

  static ExemplarSet from_jsonl(std::string_view content);
  const Exemplar* find(std::string_view label) const;
  /// The exemplars for a step in step_labels order; MissingExemplar if any is absent.
  std::vector<const Exemplar*> for_step(PromptStep step) const;
};

/// All templates for one target group plus its exemplars.
struct TemplateSet {
  TargetGroup target = TargetGroup::Migrant;
  std::map<PromptStep, PromptTemplate> templates;
  ExemplarSet exemplars;

  /// The defaults compiled from data/templates.
  static TemplateSet bundled(TargetGroup target);
  /// Reads "{target}_{step}.txt" and "{target}_exemplars.jsonl" from `dir`.
  /// Missing files are skipped; steps are checked on use.
  static TemplateSet load(TargetGroup target, const std::filesystem::path& dir);

  const PromptTemplate& at(PromptStep step) const;
  /// SHA-256 of each template body and of the exemplar file, by file name.
  std::map<std::string, std::string> hashes() const;

 private:
  std::map<std::string, std::string> sources_;
};

/// Keyword sentence with its context, in document order, space-separated.
std::string instance_passage(const Instance& inst);

/// Pure function of its arguments. Few-shot mode requires `ex` and an
/// {EXAMPLES} placeholder in the template.
std::string render_prompt(const PromptTemplate& t, const Instance& inst, PromptMode mode,
                          const ExemplarSet* ex = nullptr);

/// Next template to run. `previous` is the step just completed (nullopt at the
/// start); `high` is the high-level answer of that step when it was high_level.
std::optional<PromptStep> plan_steps(PromptFormat format, std::optional<PromptStep> previous,
                                     std::optional<HighLevel> high = std::nullopt);

}  // namespace parlframe
