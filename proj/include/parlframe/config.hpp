#pragma once

// Run configuration for the command-line pipeline. The file is JSON; every
// string value may reference environment variables as ${NAME}.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "parlframe/llm.hpp"
#include "parlframe/prompt.hpp"
#include "parlframe/taxonomy.hpp"
#include "parlframe/trends.hpp"

namespace parlframe {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// The process environment.
std::optional<std::string> process_env(const std::string& name);

/// Replaces ${NAME} with its value; "$$" is a literal "$". Throws ConfigError
/// for unset variables and unterminated references.
std::string interpolate(std::string_view text, const EnvLookup& env);

/// Applies interpolate() to every string in the tree, keys excluded.
nlohmann::json interpolate_tree(const nlohmann::json& tree, const EnvLookup& env);

/// Decimal 64-bit unsigned integer; rejects signs, blanks and overflow.
std::optional<std::uint64_t> parse_seed(std::string_view text);

struct RunConfig {
  std::filesystem::path corpus_dir;
  std::filesystem::path keywords_file;  // empty: bundled list
  std::filesystem::path template_dir;   // empty: bundled templates
  std::filesystem::path output_dir = "out";

  TargetGroup target = TargetGroup::Migrant;
  BackendConfig backend;
  std::string api_key_env = "PARLFRAME_API_KEY";
  PromptFormat format = PromptFormat::TwoStep;
  PromptMode mode = PromptMode::Zero;
  std::string run_id;  // empty: derived from model, format and mode

  std::optional<std::vector<YearRange>> exclusions;  // nullopt: target default
  StabilityParams stability;
  std::uint64_t seed = 0;

  /// Relative paths are resolved against `base`. Throws ConfigError.
  static RunConfig from_json(const nlohmann::json& tree, const std::filesystem::path& base = {},
                             const EnvLookup& env = process_env);
  static RunConfig load(const std::filesystem::path& file, const EnvLookup& env = process_env);

  /// Checks that every referenced input path exists. Throws ConfigError.
  void validate() const;

  std::string effective_run_id() const;
  std::vector<YearRange> effective_exclusions() const;
  StabilityParams effective_stability() const;  // seed and exclusions filled in
};

/// Without the API key.
void to_json(nlohmann::json& j, const RunConfig& c);

}  // namespace parlframe
