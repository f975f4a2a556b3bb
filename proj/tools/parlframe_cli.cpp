// parlframe: the pipeline driver. Each subcommand reads and writes files in the
// output directory and records its artifacts with their hashes in manifest.json.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 backend error.
// Failures print one line to stderr: error: kind=<kind> message="<text>"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "parlframe/config.hpp"
#include "parlframe/corpus.hpp"
#include "parlframe/evaluation.hpp"
#include "parlframe/extraction.hpp"
#include "parlframe/hash.hpp"
#include "parlframe/io.hpp"
#include "parlframe/llm.hpp"
#include "parlframe/prompt.hpp"
#include "parlframe/service.hpp"
#include "parlframe/trends.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace parlframe;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised after a stage has written its outputs but must still report failure.
class StageFailure : public std::runtime_error {
 public:
  StageFailure(int code, std::string kind, const std::string& what)
      : std::runtime_error(what), code_(code), kind_(std::move(kind)) {}
  int code() const { return code_; }
  const std::string& kind() const { return kind_; }

 private:
  int code_;
  std::string kind_;
};

// --- manifest -------------------------------------------------------------------

class Manifest {
 public:
  Manifest(const RunConfig& cfg, std::string stage) : cfg_(cfg), stage_(std::move(stage)) {}

  // Stages that run per prediction run are keyed "<stage>.<run id>".
  void qualify(const std::string& suffix) { stage_ += "." + suffix; }

  void input(const fs::path& p) { inputs_.push_back(entry(p)); }
  void output(const fs::path& p) {
    outputs_.push_back(entry(p));
    std::cout << "wrote " << p.string() << " sha256=" << outputs_.back()["sha256"].get<std::string>() << "\n";
  }
  json& details() { return details_; }

  // Merges this stage into <output>/manifest.json, replacing an earlier entry.
  void write() const {
    const fs::path file = cfg_.output_dir / "manifest.json";
    json doc = json::object();
    if (fs::exists(file)) {
      try {
        doc = json::parse(io::read_file(file));
      } catch (const json::exception&) {
        doc = json::object();
      }
    }
    json config = cfg_;
    config.erase("paths");  // machine-specific; artifacts are listed below
    doc["stages"][stage_] = {{"inputs", inputs_}, {"outputs", outputs_}, {"details", details_}, {"config", config}};
    fs::create_directories(cfg_.output_dir);
    io::write_file_atomic(file, doc.dump(2) + "\n");
  }

 private:
  // Paths inside the output directory are recorded relative to it.
  json entry(const fs::path& p) const {
    const auto rel = fs::weakly_canonical(p).lexically_relative(fs::weakly_canonical(cfg_.output_dir));
    const bool inside = !rel.empty() && *rel.begin() != "..";
    json e = {{"path", inside ? rel.generic_string() : p.lexically_normal().generic_string()}};
    if (fs::is_regular_file(p))
      e["sha256"] = sha256_file(p);
    else
      e["sha256"] = nullptr;
    return e;
  }

  const RunConfig& cfg_;
  std::string stage_;
  json inputs_ = json::array();
  json outputs_ = json::array();
  json details_ = json::object();
};

// --- helpers --------------------------------------------------------------------

fs::path require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw UsageError(what + " is required");
  if (!fs::is_regular_file(p)) throw io::DataError(what + " " + p.string() + " does not exist");
  return p;
}

fs::path or_default(const std::string& given, const fs::path& fallback) { return given.empty() ? fallback : fs::path(given); }

std::string target_name(const RunConfig& cfg) { return std::string(to_string(cfg.target)); }
fs::path sentences_path(const RunConfig& cfg) { return cfg.output_dir / "sentences.jsonl"; }
fs::path instances_path(const RunConfig& cfg) { return cfg.output_dir / ("instances_" + target_name(cfg) + ".jsonl"); }
fs::path predictions_path(const RunConfig& cfg) {
  return cfg.output_dir / ("predictions_" + cfg.effective_run_id() + ".jsonl");
}

void write_output(Manifest& m, const fs::path& p, std::string_view content) {
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  io::write_file_atomic(p, content);
  m.output(p);
}

// Run id of a prediction file: the first record's, or the file stem.
std::string run_of(const std::vector<Prediction>& preds, const fs::path& file) {
  if (!preds.empty() && !preds.front().run_id.empty()) return preds.front().run_id;
  auto stem = file.stem().string();
  if (stem.rfind("predictions_", 0) == 0) stem = stem.substr(12);
  return stem;
}

std::map<std::string, int> decades_of(const std::vector<Instance>& instances) {
  std::map<std::string, int> out;
  for (const auto& i : instances) out[i.id] = i.decade;
  return out;
}

// --- ingest ---------------------------------------------------------------------

void cmd_ingest(const RunConfig& cfg, const std::string& corpus_opt, const std::string& dialect_opt) {
  const fs::path corpus = corpus_opt.empty() ? cfg.corpus_dir : fs::path(corpus_opt);
  if (corpus.empty()) throw UsageError("no corpus directory: set paths.corpus or pass --corpus");
  if (!fs::is_directory(corpus)) throw io::DataError("corpus directory " + corpus.string() + " does not exist");
  std::optional<XmlDialect> forced;
  if (!dialect_opt.empty() && dialect_opt != "auto") {
    forced = parse_dialect(dialect_opt);
    if (!forced) throw UsageError("unknown dialect \"" + dialect_opt + "\"");
  }

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(corpus))
    if (e.is_regular_file() && e.path().extension() == ".xml") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw io::DataError("no .xml files in " + corpus.string());

  Manifest m(cfg, "ingest");
  std::vector<SentenceRecord> records;
  std::set<std::string> ids;
  json per_file = json::array();
  for (const auto& f : files) {
    m.input(f);
    const std::string xml = io::read_file(f);
    const auto dialect = forced ? forced : detect_dialect(xml);
    if (!dialect) throw io::DataError(f.string() + ": cannot tell the markup dialect; pass --dialect");
    Protocol p;
    try {
      p = parse_protocol(xml, *dialect);
    } catch (const IngestError& e) {
      throw IngestError(e.kind(), f.filename().string() + ": " + e.what(), e.field());
    }
    if (!ids.insert(p.source_id).second) throw io::DataError("duplicate protocol id " + p.source_id + " in " + f.string());
    auto rows = flatten(p);
    per_file.push_back({{"file", f.filename().string()},
                        {"protocol_id", p.source_id},
                        {"dialect", *dialect == XmlDialect::Modern ? "modern" : "legacy"},
                        {"date", p.date.iso()},
                        {"speeches", p.speeches.size()},
                        {"sentences", rows.size()}});
    records.insert(records.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  write_output(m, sentences_path(cfg), io::to_jsonl(records));
  m.details() = {{"protocols", per_file}, {"sentences", records.size()}};
  m.write();
  std::cout << "ingested " << files.size() << " protocols, " << records.size() << " sentences\n";
}

// --- extract --------------------------------------------------------------------

void cmd_extract(const RunConfig& cfg, const std::string& sentences_opt, bool serial_ref) {
  const fs::path in = require_file(or_default(sentences_opt, sentences_path(cfg)), "sentences file");
  const auto records = io::read_jsonl<SentenceRecord>(in);
  const KeywordSet ks =
      cfg.keywords_file.empty() ? KeywordSet::bundled(cfg.target) : KeywordSet::load(cfg.target, cfg.keywords_file);

  Manifest m(cfg, "extract." + target_name(cfg));
  m.input(in);
  if (!cfg.keywords_file.empty()) m.input(cfg.keywords_file);
  const auto instances = serial_ref ? serial::build_instances(records, ks) : build_instances(records, ks);
  write_output(m, instances_path(cfg), io::to_jsonl(instances));

  json keywords = json::object();
  for (const auto& [kw, series] : keyword_distribution(instances, ks)) {
    long total = 0;
    for (const auto& y : series) total += y.count;
    keywords[kw] = total;
  }
  json years = json::object();
  for (const auto& [year, st] : corpus_stats(records, instances)) {
    const auto n = st.instances.find(cfg.target);
    years[std::to_string(year)] = {{"sentences", st.sentences}, {"instances", n == st.instances.end() ? 0 : n->second}};
  }
  json stats = {{"target", target_name(cfg)}, {"instances", instances.size()}, {"keywords", keywords}, {"years", years}};
  write_output(m, cfg.output_dir / ("extract_stats_" + target_name(cfg) + ".json"), stats.dump(2) + "\n");
  m.details() = {{"target", target_name(cfg)},
                 {"keyword_list", ks.keywords},
                 {"special_rules", ks.special_rules},
                 {"sentences", records.size()},
                 {"instances", instances.size()}};
  m.write();
  std::cout << "extracted " << instances.size() << " " << target_name(cfg) << " instances from " << records.size()
            << " sentences\n";
}

// --- annotate -------------------------------------------------------------------

void cmd_annotate(const RunConfig& cfg, const std::string& instances_opt, bool dry_run) {
  const fs::path in = require_file(or_default(instances_opt, instances_path(cfg)), "instances file");
  const auto instances = io::read_jsonl<Instance>(in);
  const TemplateSet templates =
      cfg.template_dir.empty() ? TemplateSet::bundled(cfg.target) : TemplateSet::load(cfg.target, cfg.template_dir);
  AnnotationSpec spec;
  spec.run_id = cfg.effective_run_id();
  spec.format = cfg.format;
  spec.mode = cfg.mode;
  spec.templates = &templates;

  Manifest m(cfg, (dry_run ? "prompts." : "annotate.") + spec.run_id);
  m.input(in);
  if (dry_run) {
    const auto prompts = render_all_prompts(instances, spec);
    write_output(m, cfg.output_dir / ("prompts_" + spec.run_id + ".jsonl"), io::to_jsonl(prompts));
    m.details() = {{"run_id", spec.run_id},
                   {"format", to_string(spec.format)},
                   {"mode", to_string(spec.mode)},
                   {"templates", templates.hashes()},
                   {"instances", instances.size()},
                   {"prompts", prompts.size()},
                   {"network_requests", 0}};
    m.write();
    std::cout << "rendered " << prompts.size() << " prompts for " << instances.size() << " instances (dry run)\n";
    return;
  }

  if (cfg.backend.api_key.empty())
    std::cerr << "warning: no API key; set " << (cfg.api_key_env.empty() ? "backend.api_key" : cfg.api_key_env) << "\n";
  const fs::path out = predictions_path(cfg);
  std::vector<Prediction> previous;
  if (fs::exists(out)) {
    m.input(out);
    previous = io::read_jsonl<Prediction>(out);
  }
  auto cache = std::make_shared<ResponseCache>(cfg.output_dir / "cache");
  ChatClient client(cfg.backend, cache);
  const auto result = run_batch(instances, spec, client, previous);
  write_output(m, out, io::to_jsonl(result.predictions));
  m.details() = batch_manifest(result, spec, cfg.backend, static_cast<long>(instances.size()));
  m.write();

  std::cout << "annotated " << result.annotated << ", reused " << result.reused << ", network requests "
            << client.network_requests() << ", cache hits " << client.cache_hits() << "\n";
  for (const auto& [st, n] : result.counts) std::cout << "  " << to_string(st) << ": " << n << "\n";
  const auto failed = result.counts.find(PredictionStatus::BackendError);
  if (failed != result.counts.end() && failed->second > 0) {
    std::string first;
    for (const auto& p : result.predictions)
      if (p.status == PredictionStatus::BackendError) {
        first = p.error;
        break;
      }
    const auto sep = first.find(':');
    throw StageFailure(3, "backend." + (sep == std::string::npos ? std::string("error") : first.substr(0, sep)),
                       std::to_string(failed->second) + " of " + std::to_string(result.predictions.size()) +
                           " predictions failed; re-run to retry them. First: " + first);
  }
}

// --- evaluate -------------------------------------------------------------------

struct Scored {
  std::string run_id;
  RunEvaluation high, fine;
  json document;
};

Scored score_run(const GoldConsensus& gold, const std::vector<Prediction>& preds, const std::string& run_id,
                 const std::map<std::string, int>* decades) {
  Scored s;
  s.run_id = run_id;
  s.high = evaluate_run(gold.labels, preds, Level::High, decades);
  s.fine = evaluate_run(gold.labels, preds, Level::Fine, decades);
  s.document = evaluation_document(gold, preds, decades);
  return s;
}

std::string render_run(const Scored& s) {
  std::string out = "run " + s.run_id + "\n\n";
  out += render_text(s.high.overall) + "\n" + render_text(s.fine.overall);
  const auto& r = s.high;
  if (r.gold_only || r.predictions_only || !r.excluded_status.empty()) {
    out += "\nunscored: gold without prediction " + std::to_string(r.gold_only) + ", prediction without gold " +
           std::to_string(r.predictions_only);
    for (const auto& [st, n] : r.excluded_status) out += ", " + st + " " + std::to_string(n);
    out += "\n";
  }
  return out;
}

void cmd_evaluate(const RunConfig& cfg, const std::string& gold_opt, const std::string& preds_opt,
                  const std::string& instances_opt) {
  const fs::path gold_file = require_file(gold_opt, "--gold");
  const fs::path pred_file = require_file(or_default(preds_opt, predictions_path(cfg)), "predictions file");
  Manifest m(cfg, "evaluate");
  m.input(gold_file);
  m.input(pred_file);
  const auto gold = consensus_labels(io::read_jsonl<AnnotationRecord>(gold_file));
  const auto preds = io::read_jsonl<Prediction>(pred_file);

  std::map<std::string, int> decades;
  const fs::path inst_file = or_default(instances_opt, instances_path(cfg));
  if (fs::is_regular_file(inst_file)) {
    m.input(inst_file);
    decades = decades_of(io::read_jsonl<Instance>(inst_file));
  } else if (!instances_opt.empty()) {
    require_file(inst_file, "instances file");
  }

  const auto run = run_of(preds, pred_file);
  m.qualify(run);
  const auto s = score_run(gold, preds, run, decades.empty() ? nullptr : &decades);
  const std::string text = render_run(s);
  write_output(m, cfg.output_dir / ("evaluation_" + run + ".json"), s.document.dump(2) + "\n");
  write_output(m, cfg.output_dir / ("evaluation_" + run + ".txt"), text);
  write_output(m, cfg.output_dir / ("confusion_" + run + "_high.csv"), confusion_csv(s.high.overall.confusion));
  write_output(m, cfg.output_dir / ("confusion_" + run + "_fine.csv"), confusion_csv(s.fine.overall.confusion));
  m.details() = {{"run_id", run},
                 {"high_macro_f1", s.high.overall.macro_f1},
                 {"fine_macro_f1", s.fine.overall.macro_f1},
                 {"n", s.high.overall.n},
                 {"gold_ties", gold.ties.size()}};
  m.write();
  std::cout << text;
}

// --- trends ---------------------------------------------------------------------

struct TrendInputs {
  std::vector<Instance> instances;
  fs::path instances_file;
};

TrendInputs load_trend_instances(const RunConfig& cfg, const std::string& instances_opt, Manifest& m) {
  TrendInputs t;
  t.instances_file = require_file(or_default(instances_opt, instances_path(cfg)), "instances file");
  m.input(t.instances_file);
  t.instances = io::read_jsonl<Instance>(t.instances_file);
  return t;
}

std::vector<TrendItem> joined(const std::vector<Instance>& instances, const std::vector<Prediction>& preds,
                              const std::string& run) {
  long unmatched = 0;
  auto items = join_predictions(instances, preds, &unmatched);
  if (unmatched > 0)
    std::cerr << "warning: " << unmatched << " predictions of run " << run << " have no instance and are ignored\n";
  if (items.empty()) throw io::DataError("no prediction of run " + run + " matches an instance");
  return items;
}

std::vector<fs::path> write_trends(const RunConfig& cfg, Manifest& m, const std::string& run,
                                   const std::vector<TrendItem>& items, const std::vector<YearRange>& excl) {
  const auto high = decade_shares_high(items, excl);
  const auto sub = decade_shares_subtypes(items, excl);
  const fs::path high_csv = cfg.output_dir / ("trends_" + run + "_high.csv");
  const fs::path sub_csv = cfg.output_dir / ("trends_" + run + "_subtypes.csv");
  const fs::path chart = cfg.output_dir / ("trends_" + run + ".json");
  write_output(m, high_csv, trend_csv(high));
  write_output(m, sub_csv, trend_csv(sub));
  const json doc = {{"run_id", run},
                    {"target", target_name(cfg)},
                    {"high", trend_chart_json(high)},
                    {"subtypes", trend_chart_json(sub)}};
  write_output(m, chart, doc.dump(2) + "\n");
  return {high_csv, sub_csv, chart};
}

std::vector<YearRange> exclusions_from(const RunConfig& cfg, const std::vector<std::string>& given, bool none) {
  if (none) return {};
  if (given.empty()) return cfg.effective_exclusions();
  std::vector<YearRange> out;
  for (const auto& g : given) {
    try {
      out.push_back(parse_year_range(g));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

void cmd_trends(const RunConfig& cfg, const std::string& preds_opt, const std::string& instances_opt,
                const std::string& compare_opt, const std::vector<YearRange>& excl) {
  Manifest m(cfg, "trends");
  const fs::path pred_file = require_file(or_default(preds_opt, predictions_path(cfg)), "predictions file");
  m.input(pred_file);
  const auto t = load_trend_instances(cfg, instances_opt, m);
  const auto preds = io::read_jsonl<Prediction>(pred_file);
  const auto run = run_of(preds, pred_file);
  m.qualify(run);
  const auto items = joined(t.instances, preds, run);
  write_trends(cfg, m, run, items, excl);
  m.details() = {{"run_id", run}, {"items", items.size()}};

  if (!compare_opt.empty()) {
    const fs::path other_file = require_file(compare_opt, "--compare");
    m.input(other_file);
    const auto other = io::read_jsonl<Prediction>(other_file);
    const auto other_run = run_of(other, other_file);
    const auto b = joined(t.instances, other, other_run);
    const auto table = trend_correlation(items, b, Level::Fine, excl);
    const std::string stem = "correlation_" + run + "_vs_" + other_run;
    write_output(m, cfg.output_dir / (stem + ".csv"), correlation_csv(table));
    write_output(m, cfg.output_dir / (stem + ".json"), json(table).dump(2) + "\n");
    for (const auto& w : table.warnings) std::cerr << "warning: " << w << "\n";
    m.details()["compared_with"] = other_run;
    m.details()["correlation_rows"] = table.rows.size();
  }
  m.write();
}

// --- stability ------------------------------------------------------------------

void cmd_stability(const RunConfig& cfg, const std::string& preds_opt, const std::string& instances_opt,
                   const std::vector<YearRange>& excl, bool serial_ref) {
  Manifest m(cfg, "stability");
  const fs::path pred_file = require_file(or_default(preds_opt, predictions_path(cfg)), "predictions file");
  m.input(pred_file);
  const auto t = load_trend_instances(cfg, instances_opt, m);
  const auto preds = io::read_jsonl<Prediction>(pred_file);
  const auto run = run_of(preds, pred_file);
  m.qualify(run);
  const auto items = joined(t.instances, preds, run);

  StabilityParams params = cfg.effective_stability();
  params.exclusions = excl;
  const auto report = serial_ref ? stability_test_serial(items, params) : stability_test(items, params);
  json doc = report;
  doc["run_id"] = run;
  write_output(m, cfg.output_dir / ("stability_" + run + ".json"), doc.dump(2) + "\n");
  m.details() = {{"run_id", run}, {"seed", params.seed}, {"pairs", report.pair_count}};
  m.write();
  std::printf("%-16s %8s %8s %7s %7s\n", "label", "mean_r", "q25", "pairs", "skipped");
  for (const auto& l : report.labels)
    std::printf("%-16s %8.4f %8.4f %7ld %7ld\n", std::string(to_string(l.label)).c_str(), l.mean_r, l.q25, l.pairs,
                l.skipped);
}

// --- report ---------------------------------------------------------------------

json human_bound(const std::vector<AnnotationRecord>& records, Level level) {
  const auto labels = annotator_labels(records, level);
  json out;
  try {
    out["loo_upper_bound"] = loo_upper_bound(labels, level_classes(level));
  } catch (const EvalError& e) {
    out["loo_upper_bound"] = nullptr;
    out["loo_note"] = e.what();
  }
  try {
    out["avg_pairwise_kappa"] = avg_pairwise_kappa(labels);
  } catch (const EvalError& e) {
    out["avg_pairwise_kappa"] = nullptr;
    out["kappa_note"] = e.what();
  }
  out["annotators"] = labels.size();
  return out;
}

std::string fmt(const json& v) {
  if (v.is_null()) return "    -";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v.get<double>());
  return buf;
}

void cmd_report(const RunConfig& cfg, const std::string& gold_opt, std::vector<std::string> preds_opt,
                const std::string& instances_opt, const std::vector<YearRange>& excl) {
  Manifest m(cfg, "report");
  const fs::path gold_file = require_file(gold_opt, "--gold");
  m.input(gold_file);
  const auto records = io::read_jsonl<AnnotationRecord>(gold_file);
  const auto gold = consensus_labels(records);

  std::vector<fs::path> pred_files(preds_opt.begin(), preds_opt.end());
  if (pred_files.empty() && fs::is_directory(cfg.output_dir))
    for (const auto& e : fs::directory_iterator(cfg.output_dir)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() && name.rfind("predictions_", 0) == 0 && e.path().extension() == ".jsonl")
        pred_files.push_back(e.path());
    }
  std::sort(pred_files.begin(), pred_files.end());
  if (pred_files.empty()) throw io::DataError("no prediction files given or found in " + cfg.output_dir.string());

  std::vector<Instance> instances;
  const fs::path inst_file = or_default(instances_opt, instances_path(cfg));
  if (fs::is_regular_file(inst_file)) {
    m.input(inst_file);
    instances = io::read_jsonl<Instance>(inst_file);
  } else if (!instances_opt.empty()) {
    require_file(inst_file, "instances file");
  }
  const auto decades = decades_of(instances);

  json grid = json::array();
  json evaluations = json::object();
  json trend_files = json::array();
  std::string confusions;
  for (const auto& f : pred_files) {
    require_file(f, "predictions file");
    m.input(f);
    const auto preds = io::read_jsonl<Prediction>(f);
    const auto run = run_of(preds, f);
    const auto s = score_run(gold, preds, run, decades.empty() ? nullptr : &decades);
    grid.push_back({{"run_id", run},
                    {"high", {{"macro_f1", s.high.overall.macro_f1}, {"kappa", s.high.overall.cohen_kappa}}},
                    {"fine", {{"macro_f1", s.fine.overall.macro_f1}, {"kappa", s.fine.overall.cohen_kappa}}},
                    {"n", s.high.overall.n}});
    evaluations[run] = s.document;
    confusions += render_run(s) + "\n";
    if (!instances.empty()) {
      long unmatched = 0;
      const auto items = join_predictions(instances, preds, &unmatched);
      if (!items.empty())
        for (const auto& p : write_trends(cfg, m, run, items, excl)) trend_files.push_back(p.filename().string());
    }
  }
  const json human = {{"high", human_bound(records, Level::High)}, {"fine", human_bound(records, Level::Fine)}};

  std::string text = "macro F1 (and Cohen's kappa) against the gold consensus\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-32s %8s %8s %8s %8s %6s\n", "run", "fine F1", "high F1", "fine k", "high k", "n");
  text += line;
  for (const auto& row : grid) {
    std::snprintf(line, sizeof line, "%-32s %8s %8s %8s %8s %6ld\n", row["run_id"].get<std::string>().c_str(),
                  fmt(row["fine"]["macro_f1"]).c_str(), fmt(row["high"]["macro_f1"]).c_str(),
                  fmt(row["fine"]["kappa"]).c_str(), fmt(row["high"]["kappa"]).c_str(), row["n"].get<long>());
    text += line;
  }
  std::snprintf(line, sizeof line, "%-32s %8s %8s %8s %8s\n", "human (leave-one-out)",
                fmt(human["fine"]["loo_upper_bound"]).c_str(), fmt(human["high"]["loo_upper_bound"]).c_str(),
                fmt(human["fine"]["avg_pairwise_kappa"]).c_str(), fmt(human["high"]["avg_pairwise_kappa"]).c_str());
  text += line;
  text += "\n" + confusions;
  if (!trend_files.empty()) {
    text += "trend files:\n";
    for (const auto& f : trend_files) text += "  " + f.get<std::string>() + "\n";
  }

  const json doc = {{"gold", {{"instances", gold.labels.size()}, {"ties", gold.ties}}},
                    {"grid", grid},
                    {"human", human},
                    {"evaluations", evaluations},
                    {"trend_files", trend_files}};
  write_output(m, cfg.output_dir / "report.json", doc.dump(2) + "\n");
  write_output(m, cfg.output_dir / "report.txt", text);
  m.details() = {{"runs", grid.size()}};
  m.write();
  std::cout << text;
}

// --- serve / export-gold --------------------------------------------------------

struct ServeOptions {
  std::string data;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string instances;
  std::vector<std::string> predictions;
  std::string ui;
  std::string token;
  int threads = 8;
};

void cmd_serve(const RunConfig& cfg, const ServeOptions& o) {
  if (o.data.empty()) throw UsageError("--data is required");
  if (o.port < 0 || o.port > 65535) throw UsageError("--port must be in [0, 65535]");
  if (o.threads < 1) throw UsageError("--threads must be >= 1");
  Manifest m(cfg, "serve");
  const fs::path inst_file = require_file(or_default(o.instances, instances_path(cfg)), "instances file");
  m.input(inst_file);
  auto instances = io::read_jsonl<Instance>(inst_file);
  std::vector<Prediction> preds;
  for (const auto& p : o.predictions) {
    m.input(require_file(p, "predictions file"));
    auto more = io::read_jsonl<Prediction>(p);
    preds.insert(preds.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  if (!o.ui.empty() && !fs::is_directory(o.ui)) throw io::DataError("UI directory " + o.ui + " does not exist");

  GoldStore store(o.data);
  if (store.torn_bytes_dropped() > 0)
    std::cerr << "warning: dropped " << store.torn_bytes_dropped() << " bytes of an interrupted journal append\n";
  m.details() = {{"data", o.data}, {"revision", store.revision()}, {"instances", instances.size()}};
  m.write();

  ServiceOptions so;
  so.host = o.host;
  so.port = o.port;
  so.ui_dir = o.ui;
  so.token = o.token.empty() ? process_env("PARLFRAME_SERVICE_TOKEN").value_or("") : o.token;
  so.threads = o.threads;
  AnnotationService svc(store, std::move(instances), std::move(preds), so);

  // SIGINT/SIGTERM stop the server cleanly so the store can snapshot.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    svc.stop();
  });
  svc.run([&](int port) {
    if (port > 0) std::cout << "listening on http://" << o.host << ":" << port << std::endl;
  });
  pthread_kill(waiter.native_handle(), SIGTERM);  // no-op if it already fired
  waiter.join();
}

void cmd_export_gold(const RunConfig& cfg, const std::string& data, const std::string& output) {
  if (data.empty()) throw UsageError("--data is required");
  if (!fs::is_directory(data)) throw io::DataError("data directory " + data + " does not exist");
  Manifest m(cfg, "export-gold");
  GoldStore store(data);
  for (const char* f : {"journal.log", "snapshot.json"})
    if (fs::exists(fs::path(data) / f)) m.input(fs::path(data) / f);
  const auto content = export_gold_jsonl(store);
  write_output(m, or_default(output, cfg.output_dir / "gold.jsonl"), content);
  m.details() = {{"revision", store.revision()},
                 {"instances", std::count(content.begin(), content.end(), '\n')},
                 {"unresolved_ties", store.unresolved_ties().size()}};
  m.write();
}

// --- errors ---------------------------------------------------------------------

struct Failure {
  int code;
  std::string kind;
  std::string message;
};

std::string snake(std::string s) {
  for (auto& c : s) c = c == ' ' || c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Failure classify(std::exception_ptr ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const StageFailure& e) {
    return {e.code(), e.kind(), e.what()};
  } catch (const UsageError& e) {
    return {1, "usage", e.what()};
  } catch (const CLI::ParseError& e) {
    return {1, "usage", e.what()};
  } catch (const ConfigError& e) {
    return {1, "config", e.what()};
  } catch (const PromptError& e) {
    return {1, "config.template", e.what()};
  } catch (const BackendError& e) {
    return {3, "backend." + std::string(to_string(e.kind())), e.what()};
  } catch (const IngestError& e) {
    return {2, e.kind() == IngestError::Kind::MalformedXml ? "data.malformed_xml" : "data.missing_metadata", e.what()};
  } catch (const EvalError& e) {
    return {2, "data.evaluation", e.what()};
  } catch (const TrendError& e) {
    return {2, "data.trends", e.what()};
  } catch (const ServiceError& e) {
    return {2, e.kind() == ServiceError::Kind::CorruptJournal ? "data.corrupt_journal" : "io", e.what()};
  } catch (const io::DataError& e) {
    return {2, "data", e.what()};
  } catch (const json::exception& e) {
    return {2, "data.json", e.what()};
  } catch (const fs::filesystem_error& e) {
    return {2, "io", e.what()};
  } catch (const std::invalid_argument& e) {
    return {2, "data", e.what()};
  } catch (const std::exception& e) {
    return {2, "internal", e.what()};
  } catch (...) {
    return {2, "internal", "unknown exception"};
  }
}

std::string quoted(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\')
      out += {'\\', c};
    else if (c == '\n')
      out += "\\n";
    else if (c == '\r')
      out += "\\r";
    else
      out += c;
  }
  return out + "\"";
}

int fail(const Failure& f) {
  std::cerr << "error: kind=" << f.kind << " message=" << quoted(f.message) << std::endl;
  return f.code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parlframe: solidarity framing in parliamentary debates"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::string config_file, target, format, mode, seed, out, run_id;
  app.add_option("--config", config_file, "Run config (JSON, ${ENV} interpolated)");
  app.add_option("--target", target, "Target group")->check(CLI::IsMember({"migrant", "woman"}));
  app.add_option("--format", format, "Prompt format")->check(CLI::IsMember({"one-step", "two-step"}));
  app.add_option("--mode", mode, "Prompt mode")->check(CLI::IsMember({"zero", "few"}));
  app.add_option("--seed", seed, "Seed for the stability test (unsigned 64-bit)");
  app.add_option("--out", out, "Output directory (overrides paths.output)");
  app.add_option("--run-id", run_id, "Prediction run id (overrides prompt.run_id)");

  std::string corpus, dialect = "auto";
  auto* ingest = app.add_subcommand("ingest", "Parse protocol XML into sentences.jsonl");
  ingest->add_option("--corpus", corpus, "Directory of protocol XML files");
  ingest->add_option("--dialect", dialect, "modern, legacy or auto")->check(CLI::IsMember({"auto", "modern", "legacy"}));

  std::string sentences;
  bool serial_ref = false;
  auto* extract = app.add_subcommand("extract", "Keyword instances with context from sentences.jsonl");
  extract->add_option("--sentences", sentences, "Sentences JSONL");
  extract->add_flag("--serial", serial_ref, "Use the single-threaded reference");

  std::string instances;
  bool dry_run = false;
  auto* annotate = app.add_subcommand("annotate", "Label instances with the configured model");
  annotate->add_option("--instances", instances, "Instances JSONL");
  annotate->add_flag("--dry-run", dry_run, "Write the prompts only; no network calls");

  std::string gold, predictions;
  auto* evaluate = app.add_subcommand("evaluate", "Score a prediction run against the gold set");
  evaluate->add_option("--gold", gold, "Gold annotations JSONL")->required();
  evaluate->add_option("--predictions", predictions, "Predictions JSONL");
  evaluate->add_option("--instances", instances, "Instances JSONL, for the per-decade breakdown");

  std::string compare;
  std::vector<std::string> exclude;
  bool no_exclusions = false;
  auto add_exclusions = [&](CLI::App* sub) {
    sub->add_option("--exclude", exclude, "Excluded year range, e.g. 1933-1949 (repeatable)");
    sub->add_flag("--no-exclusions", no_exclusions, "Keep every decade");
  };
  auto* trends = app.add_subcommand("trends", "Per-decade label shares");
  trends->add_option("--predictions", predictions, "Predictions JSONL");
  trends->add_option("--instances", instances, "Instances JSONL");
  trends->add_option("--compare", compare, "Second predictions JSONL to correlate with");
  add_exclusions(trends);

  auto* stability = app.add_subcommand("stability", "Keyword subset stability test");
  stability->add_option("--predictions", predictions, "Predictions JSONL");
  stability->add_option("--instances", instances, "Instances JSONL");
  stability->add_flag("--serial", serial_ref, "Use the single-threaded reference");
  add_exclusions(stability);

  std::vector<std::string> report_preds;
  auto* report = app.add_subcommand("report", "Score grid, confusion matrices and trend files for all runs");
  report->add_option("--gold", gold, "Gold annotations JSONL")->required();
  report->add_option("--predictions", report_preds, "Predictions JSONL (repeatable; default: all in the output dir)");
  report->add_option("--instances", instances, "Instances JSONL");
  add_exclusions(report);

  ServeOptions so;
  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  serve->add_option("--data", so.data, "Store directory (journal and snapshot)");
  serve->add_option("--port", so.port, "Port; 0 picks a free one and prints it");
  serve->add_option("--host", so.host, "Bind address");
  serve->add_option("--instances", so.instances, "Instances JSONL");
  serve->add_option("--predictions", so.predictions, "Prediction runs to compare against (repeatable)");
  serve->add_option("--ui", so.ui, "Directory of the built UI bundle");
  serve->add_option("--token", so.token, "Shared bearer token (default: $PARLFRAME_SERVICE_TOKEN)");
  serve->add_option("--threads", so.threads, "Handler threads");

  std::string data, output;
  auto* export_gold = app.add_subcommand("export-gold", "Write consensus gold labels from a store");
  export_gold->add_option("--data", data, "Store directory");
  export_gold->add_option("--output", output, "Output file (default: <out>/gold.jsonl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail({1, "usage", e.what()});
  }

  try {
    RunConfig cfg = config_file.empty() ? RunConfig::from_json(json::object()) : RunConfig::load(config_file);
    if (!target.empty()) cfg.target = parse_target(target);
    if (!format.empty()) cfg.format = *parse_prompt_format(format);
    if (!mode.empty()) cfg.mode = *parse_prompt_mode(mode);
    if (!out.empty()) cfg.output_dir = out;
    if (!run_id.empty()) cfg.run_id = run_id;
    if (!seed.empty()) {
      const auto s = parse_seed(seed);
      if (!s) throw UsageError("--seed must be an unsigned 64-bit integer, got \"" + seed + "\"");
      cfg.seed = *s;
    }
    cfg.validate();
    const auto excl = exclusions_from(cfg, exclude, no_exclusions);

    if (*ingest) cmd_ingest(cfg, corpus, dialect);
    if (*extract) cmd_extract(cfg, sentences, serial_ref);
    if (*annotate) cmd_annotate(cfg, instances, dry_run);
    if (*evaluate) cmd_evaluate(cfg, gold, predictions, instances);
    if (*trends) cmd_trends(cfg, predictions, instances, compare, excl);
    if (*stability) cmd_stability(cfg, predictions, instances, excl, serial_ref);
    if (*report) cmd_report(cfg, gold, report_preds, instances, excl);
    if (*serve) cmd_serve(cfg, so);
    if (*export_gold) cmd_export_gold(cfg, data, output);
  } catch (...) {
    return fail(classify(std::current_exception()));
  }
  return 0;
}
