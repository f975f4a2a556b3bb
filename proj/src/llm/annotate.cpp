#include <algorithm>
#include <exception>
#include <regex>
#include <thread>

#include "parlframe/hash.hpp"
#include "parlframe/llm.hpp"
#include "parlframe/text.hpp"

namespace parlframe {

// --- answer parsing -----------------------------------------------------------

namespace {

std::optional<HighLevel> step_stance(PromptStep step) {
  if (step == PromptStep::SubtypeSolidarity) return HighLevel::Solidarity;
  if (step == PromptStep::SubtypeAntiSolidarity) return HighLevel::AntiSolidarity;
  return std::nullopt;
}

std::optional<std::string> resolve(std::string_view value, PromptStep step) {
  switch (step) {
    case PromptStep::HighLevel:
      if (auto h = try_parse_high(value)) return std::string(to_string(*h));
      return std::nullopt;
    case PromptStep::SubtypeSolidarity:
    case PromptStep::SubtypeAntiSolidarity: {
      const auto stance = step_stance(step);
      auto f = try_parse_fine(value, stance);
      if (f && is_model_facing(*f) && subtype_of(*f) && fine_to_high(*f) == *stance) return std::string(to_string(*f));
      return std::nullopt;
    }
    case PromptStep::OneStep: {
      auto f = try_parse_fine(value);
      if (f && is_model_facing(*f)) return std::string(to_string(*f));
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::string clean_value(std::string_view v) {
  std::string s(text::trim(v));
  auto strip = [](char c) { return c == '*' || c == '`' || c == '"' || c == '\'' || c == '<' || c == '>' ||
                                   c == '[' || c == ']' || c == '.' || c == ',' || c == ';' || c == '!'; };
  while (!s.empty() && (strip(s.back()) || s.back() == ' ')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (strip(s[b]) || s[b] == ' ')) ++b;
  return s.substr(b);
}

// Candidate spellings for the free-text fallback, mapped to canonical labels.
std::vector<std::pair<std::string, std::string>> fallback_candidates(PromptStep step) {
  std::vector<std::pair<std::string, std::string>> out;
  switch (step) {
    case PromptStep::HighLevel:
      for (const auto& a : high_aliases()) out.emplace_back(a.text, to_string(a.label));
      break;
    case PromptStep::SubtypeSolidarity:
    case PromptStep::SubtypeAntiSolidarity:
      for (const auto& a : subtype_aliases())
        out.emplace_back(a.text, to_string(*combine(*step_stance(step), a.label)));
      break;
    case PromptStep::OneStep:
      for (const auto& h : high_aliases()) {
        if (!is_stance(h.label)) {
          out.emplace_back(h.text, to_string(h.label));
          continue;
        }
        for (const auto& s : subtype_aliases())
          for (const char* sep : {":", ": ", " "})
            out.emplace_back(std::string(h.text) + sep + std::string(s.text), to_string(*combine(h.label, s.label)));
      }
      break;
  }
  return out;
}

bool word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

std::optional<std::string> scan_aliases(const std::string& lowered, PromptStep step) {
  std::optional<std::string> best;
  std::size_t best_end = 0, best_len = 0;
  for (const auto& [alias, label] : fallback_candidates(step)) {
    for (auto pos = lowered.find(alias); pos != std::string::npos; pos = lowered.find(alias, pos + 1)) {
      const std::size_t end = pos + alias.size();
      if (pos > 0 && word_byte(static_cast<unsigned char>(lowered[pos - 1]))) continue;
      if (end < lowered.size() && word_byte(static_cast<unsigned char>(lowered[end]))) continue;
      if (!best || end > best_end || (end == best_end && alias.size() > best_len)) {
        best = label;
        best_end = end;
        best_len = alias.size();
      }
    }
  }
  return best;
}

}  // namespace

std::optional<std::string> parse_step_output(std::string_view raw, PromptStep step) {
  static const std::regex label_line(R"(^[\s*_#>\-]*label[\s*_]*:(.*)$)", std::regex::icase);
  const std::string s(raw);
  std::optional<std::string> last_value;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t nl = s.find('\n', start);
    if (nl == std::string::npos) nl = s.size();
    std::string line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (std::regex_match(line, m, label_line)) last_value = clean_value(m[1].str());
    start = nl + 1;
  }
  if (last_value) {
    if (auto r = resolve(*last_value, step)) return r;
    // A well-formed label outside this step's answer space is an explicit
    // wrong answer; scanning the reasoning would only guess.
    if (try_parse_fine(*last_value) || try_parse_high(*last_value)) return std::nullopt;
  }
  return scan_aliases(text::to_lower(s), step);
}

// --- predictions --------------------------------------------------------------

std::string_view to_string(PredictionStatus s) {
  switch (s) {
    case PredictionStatus::Ok: return "ok";
    case PredictionStatus::Unparseable: return "unparseable";
    case PredictionStatus::BackendError: return "backend_error";
  }
  return "?";
}

std::optional<PredictionStatus> parse_prediction_status(std::string_view s) {
  for (auto st : {PredictionStatus::Ok, PredictionStatus::Unparseable, PredictionStatus::BackendError})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

void to_json(nlohmann::json& j, const Prediction& p) {
  nlohmann::json raws = nlohmann::json::array();
  for (const auto& r : p.raw_outputs)
    raws.push_back({{"step", to_string(r.step)}, {"attempt", r.attempt}, {"prompt_hash", r.prompt_hash}, {"text", r.text}});
  j = {{"instance_id", p.instance_id},
       {"run_id", p.run_id},
       {"high", p.high ? nlohmann::json(to_string(*p.high)) : nlohmann::json(nullptr)},
       {"fine", p.fine ? nlohmann::json(to_string(*p.fine)) : nlohmann::json(nullptr)},
       {"status", to_string(p.status)},
       {"raw_high", p.raw_high},
       {"raw_fine", p.raw_fine},
       {"raw_outputs", std::move(raws)},
       {"error", p.error}};
}

void from_json(const nlohmann::json& j, Prediction& p) {
  p = Prediction{};
  p.instance_id = j.at("instance_id").get<std::string>();
  p.run_id = j.value("run_id", "");
  if (j.contains("high") && !j["high"].is_null()) p.high = parse_high(j["high"].get<std::string>());
  if (j.contains("fine") && !j["fine"].is_null()) p.fine = parse_fine(j["fine"].get<std::string>());
  const auto st = parse_prediction_status(j.value("status", "ok"));
  if (!st) throw std::invalid_argument("unknown prediction status " + j.value("status", ""));
  p.status = *st;
  // A bare fine label implies its projection.
  if (p.fine && !p.high) p.high = fine_to_high(*p.fine);
  p.raw_high = j.value("raw_high", "");
  p.raw_fine = j.value("raw_fine", "");
  p.error = j.value("error", "");
  if (j.contains("raw_outputs"))
    for (const auto& r : j["raw_outputs"]) {
      RawOutput o;
      o.step = parse_prompt_step(r.value("step", "")).value_or(PromptStep::HighLevel);
      o.attempt = r.value("attempt", 0);
      o.prompt_hash = r.value("prompt_hash", "");
      o.text = r.value("text", "");
      p.raw_outputs.push_back(std::move(o));
    }
}

bool satisfies_projection_law(const Prediction& p) {
  if (p.status != PredictionStatus::Ok) return true;
  if (!p.high || !p.fine) return false;
  if (fine_to_high(*p.fine) != *p.high) return false;
  return subtype_of(*p.fine).has_value() == is_stance(*p.high);
}

// --- annotation ---------------------------------------------------------------

std::vector<PromptStep> reachable_steps(PromptFormat format) {
  if (format == PromptFormat::OneStep) return {PromptStep::OneStep};
  return {PromptStep::HighLevel, PromptStep::SubtypeSolidarity, PromptStep::SubtypeAntiSolidarity};
}

void validate_spec(const AnnotationSpec& spec) {
  if (!spec.templates)
    throw PromptError(PromptError::Kind::MissingTemplate, "", "annotation spec has no template set");
  for (auto step : reachable_steps(spec.format)) {
    const auto& t = spec.templates->at(step);
    if (spec.mode == PromptMode::Few) {
      const auto names = t.placeholders();
      if (std::find(names.begin(), names.end(), "EXAMPLES") == names.end())
        throw PromptError(PromptError::Kind::UnboundPlaceholder, "EXAMPLES",
                          "few-shot mode needs {EXAMPLES} in " + PromptTemplate::file_name(t.target, step));
      spec.templates->exemplars.for_step(step);
    }
  }
}

Prediction annotate_instance(const Instance& inst, const AnnotationSpec& spec, ChatClient& client) {
  const auto t0 = std::chrono::steady_clock::now();
  Prediction p;
  p.instance_id = inst.id;
  p.run_id = spec.run_id;

  std::optional<HighLevel> high;
  std::optional<PromptStep> step = plan_steps(spec.format, std::nullopt);
  try {
    while (step) {
      const std::string prompt = render_prompt(spec.templates->at(*step), inst, spec.mode, &spec.templates->exemplars);
      const std::string hash = sha256_hex(prompt);
      std::optional<std::string> answer;
      for (int attempt = 0; attempt < 2 && !answer; ++attempt) {
        Completion c = client.complete(prompt, attempt);
        (step_stance(*step) ? p.raw_fine : p.raw_high) = c.text;
        answer = parse_step_output(c.text, *step);
        p.raw_outputs.push_back({*step, attempt, hash, std::move(c.text)});
      }
      if (!answer) {
        p.status = PredictionStatus::Unparseable;
        p.error = "no label in output of step " + std::string(to_string(*step));
        break;
      }
      switch (*step) {
        case PromptStep::HighLevel:
          high = parse_high(*answer);
          p.high = high;
          if (!is_stance(*high)) p.fine = combine(*high, std::nullopt);
          break;
        case PromptStep::SubtypeSolidarity:
        case PromptStep::SubtypeAntiSolidarity:
          p.fine = parse_fine(*answer);
          break;
        case PromptStep::OneStep:
          p.fine = parse_fine(*answer);
          p.high = fine_to_high(*p.fine);
          break;
      }
      step = plan_steps(spec.format, step, high);
    }
  } catch (const BackendError& e) {
    p.status = PredictionStatus::BackendError;
    p.error = std::string(to_string(e.kind())) + ": " + e.what();
  }
  p.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
  return p;
}

BatchResult run_batch(const std::vector<Instance>& instances, const AnnotationSpec& spec, ChatClient& client,
                      const std::vector<Prediction>& previous) {
  validate_spec(spec);
  std::map<std::string, const Prediction*> kept;
  for (const auto& p : previous)
    if (p.run_id == spec.run_id && p.status != PredictionStatus::BackendError) kept[p.instance_id] = &p;

  BatchResult result;
  std::vector<const Instance*> todo;
  std::map<std::string, bool> seen;
  for (const auto& inst : instances) {
    if (seen[inst.id]) continue;
    seen[inst.id] = true;
    if (auto it = kept.find(inst.id); it != kept.end()) {
      result.predictions.push_back(*it->second);
      ++result.reused;
    } else {
      todo.push_back(&inst);
    }
  }

  std::vector<Prediction> fresh(todo.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      try {
        fresh[i] = annotate_instance(*todo[i], spec, client);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = todo.size();
      }
    }
  };
  const std::size_t n_workers =
      std::min<std::size_t>(todo.size(), static_cast<std::size_t>(client.config().concurrency_limit));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  result.annotated = static_cast<long>(fresh.size());
  for (auto& p : fresh) result.predictions.push_back(std::move(p));
  std::sort(result.predictions.begin(), result.predictions.end(),
            [](const Prediction& a, const Prediction& b) { return a.instance_id < b.instance_id; });
  for (auto st : {PredictionStatus::Ok, PredictionStatus::Unparseable, PredictionStatus::BackendError})
    result.counts[st] = 0;
  for (const auto& p : result.predictions) ++result.counts[p.status];
  return result;
}

nlohmann::json batch_manifest(const BatchResult& result, const AnnotationSpec& spec, const BackendConfig& cfg,
                              long instance_count) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [st, n] : result.counts) counts[std::string(to_string(st))] = n;
  return {{"run_id", spec.run_id},
          {"target", spec.templates ? to_string(spec.templates->target) : ""},
          {"format", to_string(spec.format)},
          {"mode", to_string(spec.mode)},
          {"backend", cfg},
          {"templates", spec.templates ? nlohmann::json(spec.templates->hashes()) : nlohmann::json::object()},
          {"instances", instance_count},
          {"predictions", result.predictions.size()},
          {"status_counts", counts}};
}

void to_json(nlohmann::json& j, const PromptRecord& r) {
  j = {{"instance_id", r.instance_id}, {"step", to_string(r.step)}, {"prompt_hash", r.prompt_hash}, {"prompt", r.prompt}};
}

std::vector<PromptRecord> render_all_prompts(const std::vector<Instance>& instances, const AnnotationSpec& spec) {
  validate_spec(spec);
  std::vector<PromptRecord> out;
  for (const auto& inst : instances)
    for (auto step : reachable_steps(spec.format)) {
      PromptRecord r;
      r.instance_id = inst.id;
      r.step = step;
      r.prompt = render_prompt(spec.templates->at(step), inst, spec.mode, &spec.templates->exemplars);
      r.prompt_hash = sha256_hex(r.prompt);
      out.push_back(std::move(r));
    }
  return out;
}

}  // namespace parlframe
