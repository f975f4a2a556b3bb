#include "parlframe/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>

#include "parlframe/io.hpp"

namespace parlframe {

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

std::string interpolate(std::string_view text, const EnvLookup& env) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '$' || i + 1 == text.size()) {
      out += text[i];
      continue;
    }
    if (text[i + 1] == '$') {
      out += '$';
      ++i;
    } else if (text[i + 1] == '{') {
      const auto close = text.find('}', i + 2);
      if (close == std::string_view::npos) throw ConfigError("unterminated ${ in \"" + std::string(text) + "\"");
      const std::string name(text.substr(i + 2, close - i - 2));
      if (name.empty()) throw ConfigError("empty variable name in \"" + std::string(text) + "\"");
      const auto value = env(name);
      if (!value) throw ConfigError("environment variable " + name + " is not set");
      out += *value;
      i = close;
    } else {
      out += '$';
    }
  }
  return out;
}

nlohmann::json interpolate_tree(const nlohmann::json& tree, const EnvLookup& env) {
  if (tree.is_string()) return interpolate(tree.get<std::string>(), env);
  if (tree.is_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : tree) out.push_back(interpolate_tree(v, env));
    return out;
  }
  if (tree.is_object()) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : tree.items()) out[k] = interpolate_tree(v, env);
    return out;
  }
  return tree;
}

std::optional<std::uint64_t> parse_seed(std::string_view text) {
  std::uint64_t v = 0;
  if (text.empty() || text.front() < '0' || text.front() > '9') return std::nullopt;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) return std::nullopt;
  return v;
}

namespace {

const nlohmann::json& section(const nlohmann::json& tree, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!tree.contains(key) || tree[key].is_null()) return empty;
  if (!tree[key].is_object()) throw ConfigError(std::string(key) + " must be an object");
  return tree[key];
}

template <typename T>
T field(const nlohmann::json& obj, const char* key, T fallback, const char* where) {
  if (!obj.contains(key) || obj[key].is_null()) return fallback;
  try {
    return obj[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(where) + key + " has the wrong type");
  }
}

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& raw, const std::filesystem::path& base, const EnvLookup& env) {
  if (!raw.is_object()) throw ConfigError("config must be a JSON object");
  // The key is only needed by annotate, so an unset variable here is not an error.
  nlohmann::json stripped = raw;
  std::string raw_key;
  if (raw.contains("backend") && raw["backend"].is_object() && raw["backend"].contains("api_key")) {
    if (!raw["backend"]["api_key"].is_string()) throw ConfigError("backend.api_key must be a string");
    raw_key = raw["backend"]["api_key"].get<std::string>();
    stripped["backend"].erase("api_key");
  }
  const nlohmann::json tree = interpolate_tree(stripped, env);
  RunConfig c;

  const auto& paths = section(tree, "paths");
  c.corpus_dir = resolve(field<std::string>(paths, "corpus", "", "paths."), base);
  c.keywords_file = resolve(field<std::string>(paths, "keywords", "", "paths."), base);
  c.template_dir = resolve(field<std::string>(paths, "templates", "", "paths."), base);
  c.output_dir = resolve(field<std::string>(paths, "output", "out", "paths."), base);

  const auto target = field<std::string>(tree, "target", "migrant", "");
  if (auto t = try_parse_target(target))
    c.target = *t;
  else
    throw ConfigError("unknown target \"" + target + "\"");

  const auto& backend = section(tree, "backend");
  try {
    c.backend = backend.get<BackendConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("backend: ") + e.what());
  }
  c.api_key_env = field<std::string>(backend, "api_key_env", c.api_key_env, "backend.");
  try {
    c.backend.api_key = interpolate(raw_key, env);
  } catch (const ConfigError&) {
    c.backend.api_key.clear();
  }
  if (c.backend.api_key.empty() && !c.api_key_env.empty()) c.backend.api_key = env(c.api_key_env).value_or("");
  try {
    c.backend.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const auto& prompt = section(tree, "prompt");
  const auto format = field<std::string>(prompt, "format", "two-step", "prompt.");
  const auto mode = field<std::string>(prompt, "mode", "zero", "prompt.");
  if (auto f = parse_prompt_format(format))
    c.format = *f;
  else
    throw ConfigError("unknown prompt.format \"" + format + "\"");
  if (auto m = parse_prompt_mode(mode))
    c.mode = *m;
  else
    throw ConfigError("unknown prompt.mode \"" + mode + "\"");
  c.run_id = field<std::string>(prompt, "run_id", "", "prompt.");

  const auto& trends = section(tree, "trends");
  if (trends.contains("exclusions") && !trends["exclusions"].is_null()) {
    if (!trends["exclusions"].is_array()) throw ConfigError("trends.exclusions must be an array");
    std::vector<YearRange> ranges;
    for (const auto& r : trends["exclusions"]) {
      if (!r.is_string()) throw ConfigError("trends.exclusions entries must be strings like \"1933-1949\"");
      try {
        ranges.push_back(parse_year_range(r.get<std::string>()));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("trends.exclusions: ") + e.what());
      }
    }
    c.exclusions = std::move(ranges);
  }

  const auto& st = section(tree, "stability");
  c.stability.num_subsets = field<int>(st, "num_subsets", c.stability.num_subsets, "stability.");
  c.stability.min_keywords = field<int>(st, "min_keywords", c.stability.min_keywords, "stability.");
  c.stability.min_dataset_share = field<double>(st, "min_dataset_share", c.stability.min_dataset_share, "stability.");
  c.stability.min_timeline_span = field<double>(st, "min_timeline_span", c.stability.min_timeline_span, "stability.");
  c.stability.max_draws = field<int>(st, "max_draws", c.stability.max_draws, "stability.");
  if (c.stability.num_subsets < 2) throw ConfigError("stability.num_subsets must be >= 2");
  if (c.stability.min_keywords < 1) throw ConfigError("stability.min_keywords must be >= 1");
  if (c.stability.max_draws < 1) throw ConfigError("stability.max_draws must be >= 1");

  if (tree.contains("seed") && !tree["seed"].is_null()) {
    const auto& s = tree["seed"];
    std::optional<std::uint64_t> seed;
    if (s.is_number_unsigned())
      seed = s.get<std::uint64_t>();
    else if (s.is_number_integer() && s.get<std::int64_t>() >= 0)
      seed = static_cast<std::uint64_t>(s.get<std::int64_t>());
    else if (s.is_string())
      seed = parse_seed(s.get<std::string>());
    if (!seed) throw ConfigError("seed must be an unsigned 64-bit integer");
    c.seed = *seed;
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& file, const EnvLookup& env) {
  std::string text;
  try {
    text = io::read_file(file);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + file.string() + ": " + e.what());
  }
  nlohmann::json tree;
  try {
    tree = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  return from_json(tree, file.parent_path(), env);
}

void RunConfig::validate() const {
  auto need = [](const std::filesystem::path& p, const char* what, bool dir) {
    if (p.empty()) return;
    if (dir ? !std::filesystem::is_directory(p) : !std::filesystem::is_regular_file(p))
      throw ConfigError(std::string(what) + " " + p.string() + " does not exist");
  };
  need(corpus_dir, "paths.corpus", true);
  need(keywords_file, "paths.keywords", false);
  need(template_dir, "paths.templates", true);
}

std::string RunConfig::effective_run_id() const {
  if (!run_id.empty()) return run_id;
  std::string id = backend.model_name + "_" + std::string(to_string(format)) + "_" + std::string(to_string(mode));
  for (auto& ch : id)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '-';
  return id;
}

std::vector<YearRange> RunConfig::effective_exclusions() const {
  return exclusions ? *exclusions : default_exclusions(target);
}

StabilityParams RunConfig::effective_stability() const {
  StabilityParams p = stability;
  p.seed = seed;
  p.exclusions = effective_exclusions();
  return p;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  nlohmann::json excl = nlohmann::json::array();
  for (const auto& r : c.effective_exclusions())
    excl.push_back(std::to_string(r.first) + "-" + std::to_string(r.last));
  j = {{"paths",
        {{"corpus", c.corpus_dir.string()},
         {"keywords", c.keywords_file.string()},
         {"templates", c.template_dir.string()},
         {"output", c.output_dir.string()}}},
       {"target", to_string(c.target)},
       {"backend", c.backend},
       {"prompt", {{"format", to_string(c.format)}, {"mode", to_string(c.mode)}, {"run_id", c.effective_run_id()}}},
       {"trends", {{"exclusions", excl}}},
       {"stability",
        {{"num_subsets", c.stability.num_subsets},
         {"min_keywords", c.stability.min_keywords},
         {"min_dataset_share", c.stability.min_dataset_share},
         {"min_timeline_span", c.stability.min_timeline_span},
         {"max_draws", c.stability.max_draws}}},
       {"seed", c.seed}};
}

}  // namespace parlframe
