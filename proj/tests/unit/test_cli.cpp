#include "doctest.h"

#include <signal.h>

#include <regex>

#include "fixtures.hpp"
#include "mock_backend.hpp"
#include "oracles.hpp"
#include "parlframe/evaluation.hpp"
#include "parlframe/extraction.hpp"
#include "parlframe/hash.hpp"
#include "parlframe/io.hpp"
#include "parlframe/llm.hpp"
#include "process.hpp"

using namespace parlframe;
using namespace parlframe::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSecret = "sk-test-not-a-real-key-7731";

// Exactly one stderr line of the documented shape.
void check_error_line(const ProcessResult& r, int code, const std::string& kind) {
  CHECK(r.exit_code == code);
  static const std::regex shape(R"(error: kind=([a-z_.]+) message="(?:[^"\\]|\\.)*"\n)");
  std::smatch m;
  const bool ok = std::regex_match(r.err, m, shape);
  CHECK_MESSAGE(ok, r.err);
  if (ok) CHECK(m[1] == kind);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

// Deterministic answers keyed by the prompt text; a subtype prompt gets a subtype.
MockReply scripted(const json& req, int) {
  static const char* high[] = {"solidarity", "anti-solidarity", "mixed", "none"};
  static const char* sub[] = {"group-based", "exchange-based", "compassionate", "empathic"};
  const auto text = MockBackend::user_text(req);
  const auto h = fnv1a(text);
  const bool subtype = text.find("which type of") != std::string::npos;
  return {200, std::string("Reasoning omitted.\nLABEL: ") + (subtype ? sub[h % 4] : high[h % 4])};
}

json pipeline_config(const std::string& base_url) {
  return {{"paths", {{"corpus", fixture("corpus").string()}}},
          {"target", "migrant"},
          {"backend",
           {{"base_url", base_url},
            {"model_name", "mock-1"},
            {"api_key", "${PF_TEST_KEY}"},
            {"max_retries", 0},
            {"concurrency_limit", 3}}},
          {"prompt", {{"format", "two-step"}, {"mode", "few"}, {"run_id", "mock"}}},
          {"stability", {{"num_subsets", 20}, {"min_keywords", 2}, {"min_dataset_share", 0.05}, {"min_timeline_span", 0.5}}},
          {"seed", 7}};
}

std::map<std::string, std::string> tree_contents(const fs::path& root, const std::string& skip_dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    const auto rel = e.path().lexically_relative(root).generic_string();
    if (rel.rfind(skip_dir, 0) == 0 || !e.is_regular_file()) continue;
    out[rel] = slurp(e.path());
  }
  return out;
}

ProcessResult cli(const std::vector<std::string>& args) { return run_cli(args, {{"PF_TEST_KEY", kSecret}}); }

}  // namespace

TEST_CASE("extract on the fixture corpus matches the token-scan oracle") {
  TempDir out;
  auto r = run_cli({"--out", out.path().string(), "ingest", "--corpus", fixture("corpus").string()});
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const auto records = io::read_jsonl<SentenceRecord>(out / "sentences.jsonl");
  CHECK(records.size() > 150);

  for (const char* target : {"migrant", "woman"}) {
    CAPTURE(target);
    r = run_cli({"--out", out.path().string(), "--target", target, "extract"});
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    const auto ks = KeywordSet::bundled(parse_target(target));
    const auto want = oracle::extract(records, ks.keywords, ks.has_rule(kFrauRule));
    const auto got = io::read_jsonl<Instance>(out / ("instances_" + std::string(target) + ".jsonl"));
    REQUIRE(got.size() == want.sentences.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      CHECK(got[k].protocol_id == want.sentences[k].protocol_id);
      CHECK(got[k].global_idx == want.sentences[k].global_idx);
      CHECK(got[k].keywords == want.sentences[k].keywords);
    }
    CHECK(r.out.find("extracted " + std::to_string(want.sentences.size()) + " ") != std::string::npos);

    // The serial reference writes the same bytes.
    const auto parallel = slurp(out / ("instances_" + std::string(target) + ".jsonl"));
    r = run_cli({"--out", out.path().string(), "--target", target, "extract", "--serial"});
    REQUIRE(r.exit_code == 0);
    CHECK(slurp(out / ("instances_" + std::string(target) + ".jsonl")) == parallel);
  }

  // Every recorded artifact carries the hash of what is on disk.
  const auto manifest = json::parse(slurp(out / "manifest.json"));
  for (const char* stage : {"ingest", "extract.migrant", "extract.woman"}) {
    REQUIRE(manifest["stages"].contains(stage));
    for (const auto& o : manifest["stages"][stage]["outputs"])
      CHECK(o["sha256"] == sha256_file(out / o["path"].get<std::string>()));
    CHECK(!manifest["stages"][stage]["inputs"].empty());
  }
  CHECK(manifest["stages"]["ingest"]["inputs"].size() == 5);
}

TEST_CASE("annotate --dry-run writes prompts and makes no requests") {
  MockBackend mock(scripted);
  TempDir out;
  io::write_file_atomic(out / "cfg.json", pipeline_config(mock.base_url()).dump());
  REQUIRE(cli({"--config", (out / "cfg.json").string(), "--out", out.path().string(), "ingest"}).exit_code == 0);
  REQUIRE(cli({"--config", (out / "cfg.json").string(), "--out", out.path().string(), "extract"}).exit_code == 0);
  const auto r = cli({"--config", (out / "cfg.json").string(), "--out", out.path().string(), "annotate", "--dry-run"});
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  CHECK(mock.requests() == 0);

  const auto instances = io::read_jsonl<Instance>(out / "instances_migrant.jsonl");
  std::vector<json> prompts;
  io::for_each_jsonl(out / "prompts_mock.jsonl", [&](const json& j) { prompts.push_back(j); });
  // Two-step format renders the high-level prompt and both subtype prompts.
  CHECK(prompts.size() == 3 * instances.size());
  for (const auto& p : prompts) CHECK(p["prompt_hash"] == sha256_hex(p["prompt"].get<std::string>()));
  CHECK_FALSE(fs::exists(out / "predictions_mock.jsonl"));
  CHECK(json::parse(slurp(out / "manifest.json"))["stages"]["prompts.mock"]["details"]["network_requests"] == 0);
}

TEST_CASE("evaluate with predictions equal to gold scores 1.0") {
  TempDir out;
  const auto gold = consensus_labels(io::read_jsonl<AnnotationRecord>(fixture("eval/gold.jsonl")));
  std::vector<Prediction> preds;
  for (const auto& [id, fine] : gold.labels) {
    Prediction p;
    p.instance_id = id;
    p.run_id = "oracle";
    p.fine = fine;
    p.high = fine_to_high(fine);
    preds.push_back(p);
  }
  io::write_jsonl(out / "preds.jsonl", preds);
  const auto r = run_cli({"--out", out.path().string(), "evaluate", "--gold", fixture("eval/gold.jsonl").string(),
                          "--predictions", (out / "preds.jsonl").string(), "--instances",
                          fixture("eval/instances.jsonl").string()});
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const auto doc = json::parse(slurp(out / "evaluation_oracle.json"));
  CHECK(doc["high"]["overall"]["macro_f1"] == 1.0);
  CHECK(doc["fine"]["overall"]["macro_f1"] == 1.0);
  CHECK(doc["high"]["overall"]["cohen_kappa"] == 1.0);
  CHECK(doc["high"]["overall"]["n"] == static_cast<long>(gold.labels.size()));
  CHECK(r.out.find("macro F1") != std::string::npos);
}

TEST_CASE("evaluate reproduces the frozen fixture report") {
  TempDir out;
  const auto r = run_cli({"--out", out.path().string(), "evaluate", "--gold", fixture("eval/gold.jsonl").string(),
                          "--predictions", fixture("eval/predictions.jsonl").string(), "--instances",
                          fixture("eval/instances.jsonl").string()});
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const auto preds = io::read_jsonl<Prediction>(fixture("eval/predictions.jsonl"));
  CHECK(slurp(out / ("evaluation_" + preds.front().run_id + ".json")) == slurp(fixture("eval/golden_report.json")));
}

TEST_CASE("report: score grid with a human row, confusion matrices and trend files") {
  TempDir out;
  const auto r = run_cli({"--out", out.path().string(), "report", "--gold", fixture("eval/gold.jsonl").string(),
                          "--predictions", fixture("eval/predictions.jsonl").string(), "--instances",
                          fixture("eval/instances.jsonl").string(), "--no-exclusions"});
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const auto doc = json::parse(slurp(out / "report.json"));
  REQUIRE(doc["grid"].size() == 1);
  const auto golden = json::parse(slurp(fixture("eval/golden_report.json")));
  CHECK(doc["grid"][0]["high"]["macro_f1"] == golden["high"]["overall"]["macro_f1"]);
  CHECK(doc["grid"][0]["fine"]["macro_f1"] == golden["fine"]["overall"]["macro_f1"]);

  const auto records = io::read_jsonl<AnnotationRecord>(fixture("eval/gold.jsonl"));
  const auto labels = annotator_labels(records, Level::High);
  CHECK(doc["human"]["high"]["loo_upper_bound"].get<double>() ==
        doctest::Approx(loo_upper_bound(labels, level_classes(Level::High))).epsilon(1e-12));
  CHECK(doc["human"]["high"]["avg_pairwise_kappa"].get<double>() ==
        doctest::Approx(avg_pairwise_kappa(labels)).epsilon(1e-12));
  CHECK(doc["trend_files"].size() == 3);
  for (const auto& f : doc["trend_files"]) CHECK(fs::exists(out / f.get<std::string>()));
  const auto text = slurp(out / "report.txt");
  CHECK(text.find("human (leave-one-out)") != std::string::npos);
  CHECK(text.find("gold\\pred") == std::string::npos);  // CSV headers stay in the CSV files
}

TEST_CASE("full pipeline is byte-deterministic with a mock backend and fixed seed") {
  MockBackend mock(scripted);
  TempDir work;
  io::write_file_atomic(work / "cfg.json", pipeline_config(mock.base_url()).dump());
  const auto cfg = (work / "cfg.json").string();

  auto run_all = [&](const fs::path& out) {
    const std::string o = out.string();
    for (const auto& args : std::vector<std::vector<std::string>>{
             {"--config", cfg, "--out", o, "ingest"},
             {"--config", cfg, "--out", o, "extract"},
             {"--config", cfg, "--out", o, "annotate"},
             {"--config", cfg, "--out", o, "trends"},
             {"--config", cfg, "--out", o, "stability"},
         }) {
      const auto r = cli(args);
      REQUIRE_MESSAGE(r.exit_code == 0, args.back() << ": " << r.err);
    }
  };
  run_all(work / "a");
  const int first_requests = mock.requests();
  CHECK(first_requests > 0);
  run_all(work / "b");
  CHECK(mock.requests() == 2 * first_requests);  // the second run had a cold cache too

  const auto a = tree_contents(work / "a", "cache/");
  const auto b = tree_contents(work / "b", "cache/");
  CHECK(a.size() >= 9);
  REQUIRE(a.size() == b.size());
  for (const auto& [name, bytes] : a) {
    CAPTURE(name);
    REQUIRE(b.count(name));
    CHECK(bytes == b.at(name));
  }

  // Predictions follow the projection law; the key reached the backend but no file.
  for (const auto& p : io::read_jsonl<Prediction>(work / "a" / "predictions_mock.jsonl")) {
    CHECK(p.status == PredictionStatus::Ok);
    CHECK(satisfies_projection_law(p));
  }
  for (const auto& h : mock.auth_headers()) CHECK(h == std::string("Bearer ") + kSecret);
  for (const auto& [name, bytes] : a) CHECK(bytes.find(kSecret) == std::string::npos);
  for (const auto& [name, bytes] : tree_contents(work / "a" / "cache", "")) CHECK(bytes.find(kSecret) == std::string::npos);

  const auto stability = json::parse(a.at("stability_mock.json"));
  CHECK(stability["pair_count"] == 190);

  // A re-run reuses every prediction and leaves the file unchanged.
  const auto before = mock.requests();
  const auto r = cli({"--config", cfg, "--out", (work / "a").string(), "annotate"});
  REQUIRE(r.exit_code == 0);
  CHECK(mock.requests() == before);
  CHECK(slurp(work / "a" / "predictions_mock.jsonl") == a.at("predictions_mock.jsonl"));

  // A different seed changes the stability subsets.
  REQUIRE(cli({"--config", cfg, "--out", (work / "a").string(), "--seed", "8", "stability"}).exit_code == 0);
  CHECK(slurp(work / "a" / "stability_mock.json") != a.at("stability_mock.json"));
}

TEST_CASE("exit codes and one-line errors") {
  TempDir dir;
  check_error_line(run_cli({"frobnicate"}), 1, "usage");
  check_error_line(run_cli({"--target", "robots", "extract"}), 1, "usage");
  check_error_line(run_cli({"--seed", "-4", "--out", dir.path().string(), "stability"}), 1, "usage");
  CHECK(run_cli({"--help"}).exit_code == 0);

  io::write_file_atomic(dir / "bad.json", "{\"paths\": ");
  check_error_line(run_cli({"--config", (dir / "bad.json").string(), "extract"}), 1, "config");
  io::write_file_atomic(dir / "unset.json", R"({"paths": {"output": "${PF_SURELY_UNSET_VAR}"}})");
  check_error_line(run_cli({"--config", (dir / "unset.json").string(), "extract"}, {{"PF_SURELY_UNSET_VAR", ""}}), 1,
                   "config");
  io::write_file_atomic(dir / "nocorpus.json", R"({"paths": {"corpus": "does/not/exist"}})");
  check_error_line(run_cli({"--config", (dir / "nocorpus.json").string(), "ingest"}), 1, "config");

  fs::create_directories(dir / "broken");
  fs::copy_file(fixture("xml/truncated.xml"), dir / "broken" / "truncated.xml");
  check_error_line(run_cli({"--out", (dir / "o").string(), "ingest", "--corpus", (dir / "broken").string()}), 2,
                   "data.malformed_xml");
  check_error_line(run_cli({"--out", (dir / "o").string(), "extract"}), 2, "data");
  check_error_line(run_cli({"--out", (dir / "o").string(), "evaluate", "--gold", fixture("eval/gold.jsonl").string()}),
                   2, "data");
  io::write_file_atomic(dir / "garbage.jsonl", "{\"instance_id\": \"x\"\nnot json\n");
  check_error_line(run_cli({"--out", (dir / "o").string(), "evaluate", "--gold", (dir / "garbage.jsonl").string(),
                            "--predictions", fixture("eval/predictions.jsonl").string()}),
                   2, "data");

  // A rejected key is a backend error; the predictions are still written for a retry.
  MockBackend denied([](const json&, int) { return MockReply{401, "", R"({"error": "bad key"})"}; });
  json cfg = pipeline_config(denied.base_url());
  io::write_file_atomic(dir / "denied.json", cfg.dump());
  const std::string o = (dir / "d").string();
  REQUIRE(cli({"--config", (dir / "denied.json").string(), "--out", o, "ingest"}).exit_code == 0);
  REQUIRE(cli({"--config", (dir / "denied.json").string(), "--out", o, "extract"}).exit_code == 0);
  const auto r = cli({"--config", (dir / "denied.json").string(), "--out", o, "annotate"});
  check_error_line(r, 3, "backend.auth_failure");
  const auto preds = io::read_jsonl<Prediction>(dir / "d" / "predictions_mock.jsonl");
  CHECK(!preds.empty());
  for (const auto& p : preds) CHECK(p.status == PredictionStatus::BackendError);
}

TEST_CASE("serve on port 0 prints the bound port and exits cleanly on SIGTERM") {
  TempDir dir;
  const auto inst = fixture("eval/instances.jsonl").string();
  ChildProcess server({cli_path().string(), "--out", (dir / "o").string(), "serve", "--data", (dir / "store").string(),
                       "--port", "0", "--instances", inst});
  const auto line = server.read_line(std::chrono::seconds(20));
  REQUIRE(line);
  static const std::regex listening(R"(listening on http://127\.0\.0\.1:(\d+))");
  std::smatch m;
  REQUIRE(std::regex_match(*line, m, listening));
  CHECK(std::stoi(m[1]) > 0);
  server.signal(SIGTERM);
  CHECK(server.wait() == 0);

  const auto e = run_cli({"--out", (dir / "o").string(), "export-gold", "--data", (dir / "store").string()});
  REQUIRE_MESSAGE(e.exit_code == 0, e.err);
  CHECK(slurp(dir / "o" / "gold.jsonl").empty());
  check_error_line(run_cli({"serve", "--data", (dir / "store").string(), "--port", "70000", "--instances", inst}), 1,
                   "usage");
}
