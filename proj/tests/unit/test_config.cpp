#include "doctest.h"

#include "fixtures.hpp"
#include "parlframe/config.hpp"
#include "parlframe/io.hpp"

using namespace parlframe;
using nlohmann::json;
using testing::TempDir;

namespace {

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars](const std::string& k) -> std::optional<std::string> {
    auto it = vars.find(k);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

}  // namespace

TEST_CASE("environment interpolation") {
  const auto env = env_of({{"HOME_DIR", "/data"}, {"KEY", "s3cr3t"}, {"EMPTY", ""}});
  CHECK(interpolate("${HOME_DIR}/corpus", env) == "/data/corpus");
  CHECK(interpolate("a${KEY}b${KEY}", env) == "as3cr3tbs3cr3t");
  CHECK(interpolate("cost $$5 and $x", env) == "cost $5 and $x");
  CHECK(interpolate("x${EMPTY}y", env) == "xy");
  CHECK(interpolate("trailing $", env) == "trailing $");
  CHECK_THROWS_AS(interpolate("${MISSING}", env), ConfigError);
  CHECK_THROWS_AS(interpolate("${KEY", env), ConfigError);
  CHECK_THROWS_AS(interpolate("${}", env), ConfigError);

  const json tree = {{"a", "${KEY}"}, {"n", 3}, {"list", {"${HOME_DIR}", 1.5, nullptr}}, {"${KEY}", "keys stay"}};
  const json got = interpolate_tree(tree, env);
  CHECK(got["a"] == "s3cr3t");
  CHECK(got["n"] == 3);
  CHECK(got["list"][0] == "/data");
  CHECK(got["list"][2].is_null());
  CHECK(got.contains("${KEY}"));
}

TEST_CASE("seeds are unsigned 64-bit integers") {
  CHECK(parse_seed("0") == 0u);
  CHECK(parse_seed("18446744073709551615") == UINT64_MAX);
  CHECK_FALSE(parse_seed("18446744073709551616"));
  CHECK_FALSE(parse_seed("-1"));
  CHECK_FALSE(parse_seed("+1"));
  CHECK_FALSE(parse_seed(" 1"));
  CHECK_FALSE(parse_seed("1x"));
  CHECK_FALSE(parse_seed(""));

  const auto env = env_of({});
  CHECK(RunConfig::from_json({{"seed", 42}}, {}, env).seed == 42u);
  CHECK(RunConfig::from_json({{"seed", "18446744073709551615"}}, {}, env).seed == UINT64_MAX);
  CHECK_THROWS_AS(RunConfig::from_json({{"seed", -3}}, {}, env), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"seed", 1.5}}, {}, env), ConfigError);
}

TEST_CASE("config file: defaults, paths and validation") {
  TempDir dir;
  std::filesystem::create_directories(dir / "corpus");
  io::write_file_atomic(dir / "kw.txt", "Flüchtlinge\n");
  io::write_file_atomic(dir / "run.json", R"({
    "paths": {"corpus": "corpus", "keywords": "${KW}", "output": "/abs/out"},
    "target": "woman",
    "backend": {"model_name": "m", "concurrency_limit": 2},
    "prompt": {"format": "one-step", "mode": "few"},
    "trends": {"exclusions": ["1914-1918", "1939:1945"]},
    "stability": {"num_subsets": 10, "min_keywords": 2},
    "seed": 9
  })");
  const auto cfg = RunConfig::load(dir / "run.json", env_of({{"KW", "kw.txt"}}));
  CHECK(cfg.corpus_dir == dir / "corpus");
  CHECK(cfg.keywords_file == dir / "kw.txt");
  CHECK(cfg.output_dir == "/abs/out");
  CHECK(cfg.target == TargetGroup::Woman);
  CHECK(cfg.backend.model_name == "m");
  CHECK(cfg.backend.concurrency_limit == 2);
  CHECK(cfg.format == PromptFormat::OneStep);
  CHECK(cfg.mode == PromptMode::Few);
  CHECK(cfg.effective_run_id() == "m_one-step_few");
  CHECK(cfg.effective_exclusions() == std::vector<YearRange>{{1914, 1918}, {1939, 1945}});
  const auto st = cfg.effective_stability();
  CHECK(st.num_subsets == 10);
  CHECK(st.min_keywords == 2);
  CHECK(st.seed == 9u);
  CHECK(st.exclusions.size() == 2);
  CHECK_NOTHROW(cfg.validate());

  auto broken = cfg;
  broken.corpus_dir = dir / "missing";
  CHECK_THROWS_AS(broken.validate(), ConfigError);
  broken = cfg;
  broken.keywords_file = dir / "corpus";  // a directory, not a file
  CHECK_THROWS_AS(broken.validate(), ConfigError);

  // Without an explicit list the target's default applies.
  const auto plain = RunConfig::from_json(json::object(), {}, env_of({}));
  CHECK(plain.target == TargetGroup::Migrant);
  CHECK(plain.effective_exclusions() == default_exclusions(TargetGroup::Migrant));
  CHECK(plain.output_dir == "out");
}

TEST_CASE("invalid configs are ConfigError") {
  const auto env = env_of({});
  CHECK_THROWS_AS(RunConfig::from_json({{"target", "robots"}}, {}, env), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"prompt", {{"format", "three-step"}}}}, {}, env), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"prompt", {{"mode", "many"}}}}, {}, env), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"backend", {{"top_p", 2.0}}}}, {}, env), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"backend", {{"base_url", "ftp://x"}}}}, {}, env), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"backend", "openai"}}, {}, env), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"trends", {{"exclusions", {"1950-1940"}}}}}, {}, env), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"stability", {{"num_subsets", 1}}}}, {}, env), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"paths", {{"output", "${NOPE}"}}}}, {}, env), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::array(), {}, env), ConfigError);

  TempDir dir;
  io::write_file_atomic(dir / "bad.json", "{ not json");
  CHECK_THROWS_AS(RunConfig::load(dir / "bad.json", env), ConfigError);
  CHECK_THROWS_AS(RunConfig::load(dir / "absent.json", env), ConfigError);
}

TEST_CASE("the API key comes from the environment and is never serialized") {
  const json tree = {{"backend", {{"api_key", "${OPENAI_KEY}"}, {"model_name", "gpt-4"}}}};
  const auto cfg = RunConfig::from_json(tree, {}, env_of({{"OPENAI_KEY", "sk-live-123"}}));
  CHECK(cfg.backend.api_key == "sk-live-123");
  CHECK(json(cfg).dump().find("sk-live-123") == std::string::npos);
  CHECK(json(cfg).dump().find("api_key") == std::string::npos);

  // Falls back to the variable named by api_key_env.
  const auto via_env = RunConfig::from_json({{"backend", {{"api_key_env", "MY_KEY"}}}}, {}, env_of({{"MY_KEY", "k2"}}));
  CHECK(via_env.backend.api_key == "k2");
  const auto default_env = RunConfig::from_json(json::object(), {}, env_of({{"PARLFRAME_API_KEY", "k3"}}));
  CHECK(default_env.backend.api_key == "k3");

  // Stages that never call a backend must not fail for a missing key.
  const auto missing = RunConfig::from_json(tree, {}, env_of({}));
  CHECK(missing.backend.api_key.empty());
}
