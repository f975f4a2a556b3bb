#include "parlframe/prompt.hpp"

#include <algorithm>
#include <regex>

#include "parlframe/embedded_data.hpp"
#include "parlframe/hash.hpp"
#include "parlframe/io.hpp"
#include "parlframe/text.hpp"

namespace parlframe {

namespace {

constexpr std::string_view kKnownPlaceholders[] = {"TEXT", "KEYWORD_SENTENCE", "CONTEXT_LEFT", "CONTEXT_RIGHT",
                                                   "EXAMPLES"};

const std::regex& placeholder_re() {
  static const std::regex re(R"(\{([A-Z_]+)\})");
  return re;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

std::string exemplars_block(const std::vector<const Exemplar*>& items) {
  std::string out = "\nExamples:\n";
  int n = 0;
  for (const Exemplar* e : items) {
    out += "\nExample " + std::to_string(++n) + "\nPassage: " + e->text + "\nReasoning: " + e->rationale +
           "\nLABEL: " + e->label + "\n";
  }
  return out;
}

std::string exemplar_file_name(TargetGroup target) { return std::string(to_string(target)) + "_exemplars.jsonl"; }

}  // namespace

std::string_view to_string(PromptStep s) {
  switch (s) {
    case PromptStep::OneStep: return "one_step";
    case PromptStep::HighLevel: return "high_level";
    case PromptStep::SubtypeSolidarity: return "subtype_solidarity";
    case PromptStep::SubtypeAntiSolidarity: return "subtype_antisolidarity";
  }
  return "?";
}

std::string_view to_string(PromptFormat f) { return f == PromptFormat::OneStep ? "one-step" : "two-step"; }
std::string_view to_string(PromptMode m) { return m == PromptMode::Zero ? "zero" : "few"; }

std::optional<PromptStep> parse_prompt_step(std::string_view s) {
  for (auto step : kPromptSteps)
    if (to_string(step) == s) return step;
  return std::nullopt;
}

std::optional<PromptFormat> parse_prompt_format(std::string_view s) {
  const std::string n = normalize_label_text(s);
  if (n == "one-step") return PromptFormat::OneStep;
  if (n == "two-step") return PromptFormat::TwoStep;
  return std::nullopt;
}

std::optional<PromptMode> parse_prompt_mode(std::string_view s) {
  const std::string n = normalize_label_text(s);
  if (n == "zero" || n == "zero-shot") return PromptMode::Zero;
  if (n == "few" || n == "few-shot") return PromptMode::Few;
  return std::nullopt;
}

std::vector<std::string> step_labels(PromptStep step) {
  std::vector<std::string> out;
  switch (step) {
    case PromptStep::HighLevel:
      for (auto h : kHighLevels) out.emplace_back(to_string(h));
      break;
    case PromptStep::SubtypeSolidarity:
    case PromptStep::SubtypeAntiSolidarity: {
      const auto stance =
          step == PromptStep::SubtypeSolidarity ? HighLevel::Solidarity : HighLevel::AntiSolidarity;
      for (auto s : kSubtypes) out.emplace_back(to_string(*combine(stance, s)));
      break;
    }
    case PromptStep::OneStep:
      for (auto f : kModelFineLabels) out.emplace_back(to_string(f));
      break;
  }
  return out;
}

// --- templates ----------------------------------------------------------------

PromptTemplate PromptTemplate::from_text(TargetGroup target, PromptStep step, std::string body) {
  PromptTemplate t;
  t.target = target;
  t.step = step;
  t.body = std::move(body);
  const auto names = t.placeholders();
  for (const auto& n : names) {
    if (std::find(std::begin(kKnownPlaceholders), std::end(kKnownPlaceholders), n) == std::end(kKnownPlaceholders))
      throw PromptError(PromptError::Kind::UnboundPlaceholder, n, "template " + file_name(target, step) +
                                                                      ": unknown placeholder {" + n + "}");
  }
  const bool has_text = std::find(names.begin(), names.end(), "TEXT") != names.end() ||
                        std::find(names.begin(), names.end(), "KEYWORD_SENTENCE") != names.end();
  if (!has_text)
    throw PromptError(PromptError::Kind::InvalidTemplate, file_name(target, step),
                      "template " + file_name(target, step) + " has neither {TEXT} nor {KEYWORD_SENTENCE}");
  t.cot = text::to_lower(t.body).find("step by step") != std::string::npos;
  return t;
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(body.begin(), body.end(), placeholder_re()); it != std::sregex_iterator(); ++it)
    out.push_back((*it)[1].str());
  return out;
}

std::string PromptTemplate::file_name(TargetGroup target, PromptStep step) {
  return std::string(to_string(target)) + "_" + std::string(to_string(step)) + ".txt";
}

// --- exemplars ----------------------------------------------------------------

ExemplarSet ExemplarSet::from_jsonl(std::string_view content) {
  ExemplarSet set;
  std::size_t start = 0;
  int line_no = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    const std::string line(text::trim(content.substr(start, end - start)));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Exemplar e{j.at("label").get<std::string>(), j.at("text").get<std::string>(), j.value("rationale", "")};
      // Store the canonical spelling so lookups do not depend on aliases.
      if (auto f = try_parse_fine(e.label))
        e.label = std::string(to_string(*f));
      else if (auto h = try_parse_high(e.label))
        e.label = std::string(to_string(*h));
      set.items.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw io::DataError("exemplars line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return set;
}

const Exemplar* ExemplarSet::find(std::string_view label) const {
  for (const auto& e : items)
    if (e.label == label) return &e;
  return nullptr;
}

std::vector<const Exemplar*> ExemplarSet::for_step(PromptStep step) const {
  std::vector<const Exemplar*> out;
  for (const auto& label : step_labels(step)) {
    const Exemplar* e = find(label);
    if (!e)
      throw PromptError(PromptError::Kind::MissingExemplar, label,
                        "no exemplar for label \"" + label + "\" (step " + std::string(to_string(step)) + ")");
    out.push_back(e);
  }
  return out;
}

// --- template sets ------------------------------------------------------------

TemplateSet TemplateSet::bundled(TargetGroup target) {
  TemplateSet set;
  set.target = target;
  for (auto step : kPromptSteps) {
    const std::string name = PromptTemplate::file_name(target, step);
    if (auto body = data::template_file(name)) {
      set.templates.emplace(step, PromptTemplate::from_text(target, step, std::string(*body)));
      set.sources_[name] = std::string(*body);
    }
  }
  if (auto ex = data::template_file(exemplar_file_name(target))) {
    set.exemplars = ExemplarSet::from_jsonl(*ex);
    set.sources_[exemplar_file_name(target)] = std::string(*ex);
  }
  return set;
}

TemplateSet TemplateSet::load(TargetGroup target, const std::filesystem::path& dir) {
  TemplateSet set;
  set.target = target;
  for (auto step : kPromptSteps) {
    const std::string name = PromptTemplate::file_name(target, step);
    if (!std::filesystem::exists(dir / name)) continue;
    std::string body = io::read_file(dir / name);
    set.templates.emplace(step, PromptTemplate::from_text(target, step, body));
    set.sources_[name] = std::move(body);
  }
  const auto ex_path = dir / exemplar_file_name(target);
  if (std::filesystem::exists(ex_path)) {
    std::string body = io::read_file(ex_path);
    set.exemplars = ExemplarSet::from_jsonl(body);
    set.sources_[exemplar_file_name(target)] = std::move(body);
  }
  return set;
}

const PromptTemplate& TemplateSet::at(PromptStep step) const {
  auto it = templates.find(step);
  if (it == templates.end()) {
    const std::string name = PromptTemplate::file_name(target, step);
    throw PromptError(PromptError::Kind::MissingTemplate, name, "missing template " + name);
  }
  return it->second;
}

std::map<std::string, std::string> TemplateSet::hashes() const {
  std::map<std::string, std::string> out;
  for (const auto& [name, body] : sources_) out[name] = sha256_hex(body);
  return out;
}

// --- rendering ----------------------------------------------------------------

std::string instance_passage(const Instance& inst) {
  std::vector<std::string> parts = inst.context_left;
  parts.push_back(inst.text);
  parts.insert(parts.end(), inst.context_right.begin(), inst.context_right.end());
  return join(parts);
}

std::string render_prompt(const PromptTemplate& t, const Instance& inst, PromptMode mode, const ExemplarSet* ex) {
  std::string examples;
  if (mode == PromptMode::Few) {
    const auto names = t.placeholders();
    if (std::find(names.begin(), names.end(), "EXAMPLES") == names.end())
      throw PromptError(PromptError::Kind::UnboundPlaceholder, "EXAMPLES",
                        "few-shot prompt needs an {EXAMPLES} placeholder in " + PromptTemplate::file_name(t.target, t.step));
    if (!ex) throw PromptError(PromptError::Kind::MissingExemplar, step_labels(t.step).front(), "no exemplar set given");
    examples = exemplars_block(ex->for_step(t.step));
  }

  std::string out;
  out.reserve(t.body.size() + inst.text.size() * 4);
  auto last = t.body.cbegin();
  for (auto it = std::sregex_iterator(t.body.begin(), t.body.end(), placeholder_re()); it != std::sregex_iterator();
       ++it) {
    const auto& m = *it;
    out.append(last, m[0].first);
    last = m[0].second;
    const std::string name = m[1].str();
    if (name == "TEXT")
      out += instance_passage(inst);
    else if (name == "KEYWORD_SENTENCE")
      out += inst.text;
    else if (name == "CONTEXT_LEFT")
      out += join(inst.context_left);
    else if (name == "CONTEXT_RIGHT")
      out += join(inst.context_right);
    else if (name == "EXAMPLES")
      out += examples;
    else
      throw PromptError(PromptError::Kind::UnboundPlaceholder, name, "unknown placeholder {" + name + "}");
  }
  out.append(last, t.body.cend());
  return out;
}

std::optional<PromptStep> plan_steps(PromptFormat format, std::optional<PromptStep> previous,
                                     std::optional<HighLevel> high) {
  if (format == PromptFormat::OneStep) {
    if (!previous) return PromptStep::OneStep;
    return std::nullopt;
  }
  if (!previous) return PromptStep::HighLevel;
  if (*previous != PromptStep::HighLevel || !high) return std::nullopt;
  if (*high == HighLevel::Solidarity) return PromptStep::SubtypeSolidarity;
  if (*high == HighLevel::AntiSolidarity) return PromptStep::SubtypeAntiSolidarity;
  return std::nullopt;
}

}  // namespace parlframe
