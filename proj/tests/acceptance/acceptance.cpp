// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Each criterion collects every violated condition rather than stopping at the
// first, and reports the first few.

#include <omp.h>
#include <signal.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "httplib.h"
#include "mock_backend.hpp"
#include "oracles.hpp"
#include "parlframe/evaluation.hpp"
#include "parlframe/extraction.hpp"
#include "parlframe/hash.hpp"
#include "parlframe/io.hpp"
#include "parlframe/llm.hpp"
#include "parlframe/prompt.hpp"
#include "parlframe/service.hpp"
#include "parlframe/trends.hpp"
#include "process.hpp"
#include "storm.hpp"

using namespace parlframe;
using namespace parlframe::testing;
using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (!ok) failures_.push_back(what);
  }
  void note(std::string n) { notes_.push_back(std::move(n)); }
  bool passed() const { return failures_.empty(); }
  long checks() const { return checks_; }
  const std::vector<std::string>& failures() const { return failures_; }
  const std::vector<std::string>& notes() const { return notes_; }

 private:
  long checks_ = 0;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// --- metric oracle equivalence --------------------------------------------------

void metric_oracle(Check& c) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240611);
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const int k = std::uniform_int_distribution<int>(1, 10)(rng);
    const int n = std::uniform_int_distribution<int>(1, 100)(rng);
    std::vector<std::string> classes, gold, pred;
    for (int i = 0; i < k; ++i) classes.push_back("c" + std::to_string(i));
    std::uniform_int_distribution<int> pick(0, k - 1);
    std::bernoulli_distribution copy(0.5);
    for (int i = 0; i < n; ++i) {
      gold.push_back(classes[pick(rng)]);
      pred.push_back(copy(rng) ? gold.back() : classes[pick(rng)]);
    }
    const auto cm = confusion_matrix(gold, pred, classes);
    for (const auto& g : classes)
      for (const auto& p : classes)
        c.expect(cm.at(g, p) == oracle::count_pairs(gold, pred, g, p), "case " + std::to_string(t) + ": cell " + g + "/" + p);
    const auto want = oracle::per_class(gold, pred, classes);
    for (const auto& s : per_class_f1(cm)) {
      const auto& o = want.at(s.label);
      const double d = std::max({std::abs(s.precision - o.precision), std::abs(s.recall - o.recall), std::abs(s.f1 - o.f1)});
      worst = std::max(worst, d);
      c.expect(d <= 1e-12, "case " + std::to_string(t) + ": per-class " + s.label);
    }
    const double df = std::abs(macro_f1(cm) - oracle::macro_f1(gold, pred, classes));
    const double dk = std::abs(cohen_kappa(gold, pred) - oracle::cohen_kappa(gold, pred));
    worst = std::max({worst, df, dk});
    c.expect(df <= 1e-12, "case " + std::to_string(t) + ": macro F1");
    c.expect(dk <= 1e-12, "case " + std::to_string(t) + ": kappa");
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, "runtime " + fmt(secs) + " s");
  c.note("1000 cases, max |diff| " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s");
}

// --- worked values ----------------------------------------------------------------

void worked_values(Check& c) {
  const double f1 = macro_f1(confusion_matrix({"A", "A", "B", "C"}, {"A", "B", "B", "B"}, {"A", "B", "C"}));
  // A: F1 2/3, B: F1 1/2, C: 0.
  c.expect(std::abs(f1 - (2.0 / 3.0 + 0.5) / 3.0) < 1e-12, "macro_f1 = " + fmt(f1, 17));
  c.expect(std::abs(f1 - 0.3889) < 5e-5, "macro_f1 not 0.388...");

  const double r = pearson({1, 2, 3}, {1, 2, 4}).r;
  c.expect(std::abs(r - 0.98198) < 1e-5, "pearson = " + fmt(r, 10));
  c.expect(std::abs(r - 9.0 / std::sqrt(84.0)) < 1e-12, "pearson differs from 9/sqrt(84)");

  const AnnotatorLabels toy{{"a1", {{"i1", "A"}, {"i2", "A"}}},
                            {"a2", {{"i1", "A"}, {"i2", "B"}}},
                            {"a3", {{"i1", "A"}, {"i2", "B"}}}};
  const double loo = loo_upper_bound(toy, {"A", "B"});
  c.expect(std::abs(loo - 7.0 / 9.0) < 1e-12, "loo_upper_bound = " + fmt(loo, 17));
  c.note("macro_f1 " + fmt(f1, 6) + ", r " + fmt(r, 7) + ", loo " + fmt(loo, 12));
}

// --- evaluation regression on the frozen fixture -----------------------------------

void evaluation_regression(Check& c) {
  TempDir out("pf-accept-eval");
  const auto run = [&](const fs::path& dir) {
    return run_cli({"--out", dir.string(), "evaluate", "--gold", fixture("eval/gold.jsonl").string(), "--predictions",
                    fixture("eval/predictions.jsonl").string(), "--instances", fixture("eval/instances.jsonl").string()});
  };
  const auto preds = io::read_jsonl<Prediction>(fixture("eval/predictions.jsonl"));
  const std::string name = "evaluation_" + preds.front().run_id + ".json";
  std::string bytes[2];
  for (int i = 0; i < 2; ++i) {
    const auto dir = out / ("run" + std::to_string(i));
    const auto r = run(dir);
    c.expect(r.exit_code == 0, "evaluate exit " + std::to_string(r.exit_code) + ": " + r.err);
    if (r.exit_code != 0) return;
    bytes[i] = slurp(dir / name);
  }
  c.expect(bytes[0] == bytes[1], "evaluation JSON differs between runs");
  c.expect(bytes[0] == slurp(fixture("eval/golden_report.json")), "evaluation JSON differs from the golden report");

  // Externally computed scores (expected_sklearn.json) reproduced within rounding.
  const auto doc = json::parse(bytes[0]);
  const auto expected = json::parse(slurp(fixture("eval/expected_sklearn.json")));
  double worst = 0;
  for (const char* level : {"high", "fine"}) {
    const double got = doc.at(level).at("overall").at("macro_f1").get<double>();
    const double want = expected.at(level).at("macro_f1").get<double>();
    worst = std::max(worst, std::abs(got - want));
    c.expect(std::abs(got - want) <= 0.005, std::string(level) + " macro F1 " + fmt(got) + " vs " + fmt(want));
    const double k = doc.at(level).at("overall").at("cohen_kappa").get<double>();
    c.expect(std::abs(k - expected.at(level).at("kappa").get<double>()) <= 0.005, std::string(level) + " kappa");
  }
  c.note("golden bytes stable, max |macro F1 diff| " + fmt(worst, 3));
}

// --- normalization laws ---------------------------------------------------------

void normalization_laws(Check& c) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> year(1860, 2029), label(0, 99), status(0, 9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TrendItem> items;
    for (int i = 0; i < 500; ++i) {
      TrendItem t;
      t.instance_id = std::to_string(trial) + "-" + std::to_string(i);
      t.year = year(rng);
      t.keyword = "k";
      const int s = status(rng);
      t.status = s == 0 ? PredictionStatus::Unparseable : s == 1 ? PredictionStatus::BackendError : PredictionStatus::Ok;
      if (t.status == PredictionStatus::Ok) {
        t.fine = kModelFineLabels[label(rng) % kModelFineLabels.size()];
        t.high = fine_to_high(*t.fine);
      }
      items.push_back(t);
    }
    const std::string tag = "trial " + std::to_string(trial);

    // Independent per-decade counts.
    std::map<int, long> ok_n, none_n;
    for (const auto& t : items)
      if (t.status == PredictionStatus::Ok) {
        ++ok_n[decade_of(t.year)];
        if (*t.high == HighLevel::None) ++none_n[decade_of(t.year)];
      }

    const auto high = decade_shares_high(items, {});
    for (std::size_t p = 0; p < high.series.at(0).points.size(); ++p) {
      const int decade = high.series[0].points[p].decade;
      double sum = 0;
      long count = 0;
      for (const auto& s : high.series) {
        sum += s.points.at(p).share;
        count += s.points.at(p).count;
        c.expect(s.points[p].n == ok_n[decade], tag + ": high denominator");
      }
      c.expect(sum <= 100.0 + 1e-9, tag + ": high shares exceed 100");
      const double none_share = 100.0 * double(none_n[decade]) / double(ok_n[decade]);
      c.expect(std::abs(sum + none_share - 100.0) < 1e-9, tag + ": none is not the remainder");
      c.expect(count + none_n[decade] == ok_n[decade], tag + ": counts");
    }

    const auto sub = decade_shares_subtypes(items, {});
    for (std::size_t p = 0; p < sub.series.at(0).points.size(); ++p) {
      double sum = 0;
      for (const auto& s : sub.series) sum += s.points.at(p).share;
      c.expect(std::abs(sum - 100.0) < 1e-9, tag + ": subtype shares sum to " + fmt(sum, 17));
    }

    // The exclusion removes exactly the 1930s and 1940s.
    for (const auto& set : {std::make_pair(decade_shares_high(items, {}), decade_shares_high(items, {{1933, 1949}})),
                            std::make_pair(decade_shares_subtypes(items, {}),
                                           decade_shares_subtypes(items, {{1933, 1949}}))}) {
      std::set<int> all, kept;
      for (const auto& pt : set.first.series.at(0).points) all.insert(pt.decade);
      for (const auto& pt : set.second.series.at(0).points) kept.insert(pt.decade);
      std::set<int> removed;
      std::set_difference(all.begin(), all.end(), kept.begin(), kept.end(), std::inserter(removed, removed.end()));
      std::set<int> want;
      for (int d : {1930, 1940})
        if (all.count(d)) want.insert(d);
      c.expect(removed == want, tag + ": " + set.first.kind + " exclusion removed the wrong decades");
      c.expect(std::includes(all.begin(), all.end(), kept.begin(), kept.end()), tag + ": exclusion added decades");
    }
  }
  c.note("200 random prediction sets of 500 items");
}

// --- stability test --------------------------------------------------------------

std::vector<TrendItem> null_corpus(int keywords, int per_cell, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TrendItem> out;
  for (int d = 1950; d <= 2020; d += 10) {
    const double t = (d - 1950) / 70.0;
    const double sol = 0.60 - 0.35 * t, anti = 0.05 + 0.40 * t, mixed = 0.05 + 0.20 * t * t;
    for (int k = 0; k < keywords; ++k)
      for (int i = 0; i < per_cell; ++i) {
        const double x = u(rng);
        const FineLabel f = x < sol                  ? FineLabel::SolidarityCompassionate
                            : x < sol + anti         ? FineLabel::AntiSolidarityGroupBased
                            : x < sol + anti + mixed ? FineLabel::Mixed
                                                     : FineLabel::None;
        TrendItem it;
        it.instance_id = "n" + std::to_string(out.size());
        it.year = d + i % 10;
        it.keyword = "kw" + std::to_string(k);
        it.fine = f;
        it.high = fine_to_high(f);
        out.push_back(it);
      }
  }
  return out;
}

void stability(Check& c) {
  const auto items = null_corpus(12, 60, 2024);
  c.expect(items.size() >= 5000, "null corpus has " + std::to_string(items.size()) + " items");
  StabilityParams params;
  params.num_subsets = 200;
  params.seed = 42;

  auto t0 = Clock::now();
  const auto rep = stability_test(items, params);
  const double par_secs = seconds_since(t0);
  c.expect(rep.pair_count == 19900, "pair_count " + std::to_string(rep.pair_count));
  double sol_r = NAN;
  for (const auto& l : rep.labels) {
    c.expect(l.pairs + l.skipped == 19900, std::string(to_string(l.label)) + ": pairs + skipped");
    if (l.label == HighLevel::Solidarity) sol_r = l.mean_r;
  }
  c.expect(sol_r >= 0.95, "mean r solidarity " + fmt(sol_r));

  const auto bytes = json(rep).dump();
  c.expect(json(stability_test(items, params)).dump() == bytes, "same seed gave a different report");
  t0 = Clock::now();
  const auto serial = json(stability_test_serial(items, params)).dump();
  const double ser_secs = seconds_since(t0);
  c.expect(serial == bytes, "serial reference differs from the parallel kernel");
  c.expect(par_secs < 120.0, "runtime " + fmt(par_secs) + " s");
  c.note(std::to_string(items.size()) + " items, 19900 pairs, mean r solidarity " + fmt(sol_r, 4) + ", parallel " +
         fmt(par_secs, 3) + " s (" + std::to_string(omp_get_max_threads()) + " threads), serial " + fmt(ser_secs, 3) +
         " s");
}

// --- extraction fidelity and pipeline determinism ------------------------------------

std::vector<SentenceRecord> fixture_corpus() {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(fixture("corpus"))) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<SentenceRecord> all;
  for (const auto& f : files) {
    const std::string xml = slurp(f);
    const auto rows = flatten(parse_protocol(xml, *detect_dialect(xml)));
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ull;
  return h;
}

MockReply scripted(const json& req, int) {
  static const char* high[] = {"solidarity", "anti-solidarity", "mixed", "none"};
  static const char* sub[] = {"group-based", "exchange-based", "compassionate", "empathic"};
  const auto text = MockBackend::user_text(req);
  const auto h = fnv1a(text);
  const bool subtype = text.find("which type of") != std::string::npos;
  return {200, std::string("LABEL: ") + (subtype ? sub[h % 4] : high[h % 4])};
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    const auto rel = e.path().lexically_relative(root).generic_string();
    if (rel.rfind("cache", 0) == 0 || !e.is_regular_file()) continue;
    out[rel] = slurp(e.path());
  }
  return out;
}

void extraction_fidelity(Check& c) {
  const auto corpus = fixture_corpus();
  std::size_t total = 0;
  int frau = 0;
  for (auto target : {TargetGroup::Migrant, TargetGroup::Woman}) {
    const std::string tag(to_string(target));
    const auto ks = KeywordSet::bundled(target);
    const auto got = build_instances(corpus, ks);
    const auto want = oracle::extract(corpus, ks.keywords, ks.has_rule(kFrauRule));
    c.expect(got.size() == want.sentences.size(), tag + ": count " + std::to_string(got.size()) + " vs " +
                                                       std::to_string(want.sentences.size()));
    c.expect(!got.empty(), tag + ": no instances");
    std::map<std::pair<std::string, int>, std::string> text;
    for (const auto& r : corpus) text[{r.protocol_id, r.global_idx}] = r.text;
    for (std::size_t k = 0; k < std::min(got.size(), want.sentences.size()); ++k) {
      const auto& g = got[k];
      const auto& w = want.sentences[k];
      const std::string at = tag + " #" + std::to_string(k);
      c.expect(g.protocol_id == w.protocol_id && g.global_idx == w.global_idx, at + ": sentence");
      c.expect(g.keywords == w.keywords, at + ": keyword hits");
      std::vector<std::string> left, right;
      for (int i : w.left_globals) left.push_back(text[{w.protocol_id, i}]);
      for (int i : w.right_globals) right.push_back(text[{w.protocol_id, i}]);
      c.expect(g.context_left == left, at + ": left context");
      c.expect(g.context_right == right, at + ": right context");
    }
    const auto ser = serial::build_instances(corpus, ks);
    c.expect(io::to_jsonl(ser) == io::to_jsonl(got), tag + ": serial and parallel extraction differ");
    if (target == TargetGroup::Woman) {
      frau = want.frau_exclusions;
      c.expect(frau > 0, "no Frau-rule exclusions in the fixture");
    }
    total += got.size();
  }

  // Full pipeline twice with a scripted backend and a fixed seed.
  MockBackend mock(scripted);
  TempDir work("pf-accept-pipeline");
  const json cfg = {
      {"paths", {{"corpus", fixture("corpus").string()}}},
      {"target", "migrant"},
      {"backend", {{"base_url", mock.base_url()}, {"model_name", "mock-1"}, {"max_retries", 0}, {"concurrency_limit", 3}}},
      {"prompt", {{"format", "two-step"}, {"mode", "few"}, {"run_id", "mock"}}},
      {"stability", {{"num_subsets", 20}, {"min_keywords", 2}, {"min_dataset_share", 0.05}, {"min_timeline_span", 0.5}}},
      {"seed", 7}};
  io::write_file_atomic(work / "cfg.json", cfg.dump());
  for (const char* run : {"a", "b"})
    for (const char* stage : {"ingest", "extract", "annotate", "trends", "stability"}) {
      const auto r = run_cli({"--config", (work / "cfg.json").string(), "--out", (work / run).string(), stage},
                             {{"PARLFRAME_API_KEY", "acceptance-key"}});
      c.expect(r.exit_code == 0, std::string(run) + "/" + stage + " exit " + std::to_string(r.exit_code) + ": " + r.err);
      if (r.exit_code != 0) return;
    }
  const auto a = tree_contents(work / "a");
  const auto b = tree_contents(work / "b");
  c.expect(a.size() == b.size() && a.size() >= 9, "pipeline output file sets differ");
  for (const auto& [name, bytes] : a) c.expect(b.count(name) && b.at(name) == bytes, "pipeline output differs: " + name);
  c.note(std::to_string(corpus.size()) + " sentences, " + std::to_string(total) + " instances, " +
         std::to_string(frau) + " Frau exclusions, " + std::to_string(a.size()) + " pipeline files identical");
}

// --- two-step protocol conformance -----------------------------------------------

void two_step_conformance(Check& c) {
  constexpr int kLimit = 3;
  const auto ts = TemplateSet::bundled(TargetGroup::Migrant);
  std::vector<Instance> inst;
  for (int i = 0; i < 200; ++i) {
    Instance x;
    x.id = short_hash("acc" + std::to_string(i));
    x.target = TargetGroup::Migrant;
    x.keyword = "Flüchtlinge";
    x.keywords = {"Flüchtlinge"};
    x.text = "Die Flüchtlinge der Gruppe " + std::to_string(i) + " kamen an.";
    x.year = 1950 + i % 70;
    x.decade = decade_of(x.year);
    inst.push_back(x);
  }
  const std::vector<std::string> highs = {"solidarity", "anti-solidarity", "mixed", "none"};
  const std::vector<std::string> subs = {"group-based", "exchange-based", "compassionate", "empathic"};

  std::mutex mu;
  std::map<std::string, std::string> first;  // instance text -> step-1 answer
  std::map<std::string, int> second;         // instance text -> step-2 requests
  std::map<std::string, std::string> text_of_id;
  for (const auto& i : inst) text_of_id[i.id] = i.text;
  MockBackend m([&](const json& r, int) {
    const std::string u = MockBackend::user_text(r);
    const std::size_t h = fnv1a(u);
    std::string key;
    for (const auto& i : inst)
      if (u.find(i.text) != std::string::npos) key = i.text;
    std::lock_guard lock(mu);
    const int delay = static_cast<int>(h % 7);
    if (u.find("which type of") == std::string::npos) {
      first[key] = highs[h % highs.size()];
      return MockReply{200, "LABEL: " + first[key], "", delay};
    }
    ++second[key];
    return MockReply{200, "LABEL: " + subs[h % subs.size()], "", delay};
  });
  BackendConfig cfg;
  cfg.base_url = m.base_url();
  cfg.model_name = "mock";
  cfg.api_key = "k";
  cfg.max_retries = 0;
  cfg.concurrency_limit = kLimit;
  ChatClient client(cfg);
  AnnotationSpec spec;
  spec.run_id = "acceptance";
  spec.format = PromptFormat::TwoStep;
  spec.templates = &ts;
  const auto result = run_batch(inst, spec, client);

  long ok = 0, lawful = 0;
  for (const auto& p : result.predictions)
    if (p.status == PredictionStatus::Ok) {
      ++ok;
      lawful += satisfies_projection_law(p) && p.fine && p.high && fine_to_high(*p.fine) == *p.high;
    }
  c.expect(ok == long(inst.size()), "ok predictions " + std::to_string(ok));
  c.expect(lawful == ok, "projection law holds for " + std::to_string(lawful) + "/" + std::to_string(ok));
  long stance = 0;
  for (const auto& i : inst) {
    const bool s = first[i.text] == "solidarity" || first[i.text] == "anti-solidarity";
    stance += s;
    c.expect(second[i.text] == (s ? 1 : 0), "step-2 requests for " + i.id + ": " + std::to_string(second[i.text]));
  }
  c.expect(m.max_in_flight() <= kLimit, "max in flight " + std::to_string(m.max_in_flight()));
  c.note(std::to_string(inst.size()) + " instances, " + std::to_string(stance) + " stance, " +
         std::to_string(m.requests()) + " requests, max in flight " + std::to_string(m.max_in_flight()) + "/" +
         std::to_string(kLimit));
}

// --- service durability ------------------------------------------------------------

void service_durability(Check& c) {
  TempDir dir("pf-accept-storm");
  const auto instances = fixture("eval/instances.jsonl");
  const auto storm = run_write_storm(dir / "store", dir / "out", instances, 5, 99);
  c.expect(storm.writes == 100, "storm size " + std::to_string(storm.writes));
  c.expect(storm.kills >= 1, "no kill happened");
  c.expect(storm.settled == storm.writes, "settled " + std::to_string(storm.settled));
  for (const auto& p : storm.journal_problems) c.expect(false, "journal: " + p);
  for (const auto& u : storm.unexpected) c.expect(false, "response: " + u);

  long torn = 0;
  {
    GoldStore store(dir / "store");
    torn = store.torn_bytes_dropped();
    const auto labels = store.labels();
    std::size_t count = 0;
    for (const auto& [id, by] : labels) count += by.size();
    c.expect(count == storm.writes, "replayed " + std::to_string(count) + " annotations");
    c.expect(store.records().size() == storm.writes, "duplicate records after replay");
    for (const auto& k : storm.acknowledged) {
      const auto it = labels.find(k.first);
      c.expect(it != labels.end() && it->second.count(k.second) && it->second.at(k.second) == storm_label(k),
               "acknowledged annotation lost: " + k.first + "/" + k.second);
    }
  }

  std::string exports[2];
  for (auto& e : exports) {
    ServeProcess server(dir / "store", dir / "out", instances);
    httplib::Client cl("127.0.0.1", server.port());
    const auto r1 = cl.Get("/api/export/gold");
    const auto r2 = cl.Get("/api/export/gold");
    c.expect(r1 && r2 && r1->status == 200, "export request failed");
    if (r1 && r2) {
      c.expect(r1->body == r2->body, "export differs between requests");
      e = r1->body;
    }
    server.signal(SIGTERM);
    c.expect(server.wait() == 0, "serve did not exit cleanly");
  }
  c.expect(exports[0] == exports[1], "export differs across restarts");
  c.note(std::to_string(storm.kills) + " kills over " + std::to_string(storm.rounds) + " rounds, " +
         std::to_string(storm.acknowledged.size()) + " acknowledged, " + std::to_string(torn) +
         " torn bytes dropped on replay");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"metric-oracle-equivalence", metric_oracle},
      {"worked-values", worked_values},
      {"evaluation-regression", evaluation_regression},
      {"normalization-laws", normalization_laws},
      {"stability-test", stability},
      {"extraction-fidelity", extraction_fidelity},
      {"two-step-conformance", two_step_conformance},
      {"service-durability", service_durability},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    const auto t0 = Clock::now();
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    std::string detail;
    for (const auto& n : c.notes()) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("%s %-27s %6.2fs  %s\n", c.passed() ? "PASS" : "FAIL", name.c_str(), seconds_since(t0),
                detail.c_str());
    if (!c.passed()) {
      ++failed;
      const auto& f = c.failures();
      for (std::size_t i = 0; i < std::min<std::size_t>(f.size(), 5); ++i) std::printf("     - %s\n", f[i].c_str());
      if (f.size() > 5) std::printf("     - ... %zu more\n", f.size() - 5);
    }
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
