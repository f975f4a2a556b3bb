#include <cstdio>
#include <sstream>

#include "parlframe/evaluation.hpp"
#include "parlframe/io.hpp"

namespace parlframe {

void to_json(nlohmann::json& j, const AnnotationRecord& r) {
  j = {{"instance_id", r.instance_id}, {"annotator_id", r.annotator_id}, {"fine_label", to_string(r.fine)}};
}

void from_json(const nlohmann::json& j, AnnotationRecord& r) {
  r.instance_id = j.at("instance_id").get<std::string>();
  r.annotator_id = j.contains("annotator_id") ? j["annotator_id"].get<std::string>() : j.at("rater_id").get<std::string>();
  const std::string label = j.contains("fine_label") ? j["fine_label"].get<std::string>() : j.at("label").get<std::string>();
  r.fine = parse_fine(label);
}

GoldConsensus consensus_labels(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, std::vector<FineLabel>> votes;
  std::map<std::string, FineLabel> fixed;
  for (const auto& r : records) {
    if (r.annotator_id == kConsensusAnnotator)
      fixed[r.instance_id] = r.fine;
    else
      votes[r.instance_id].push_back(r.fine);
  }
  GoldConsensus out;
  out.labels = fixed;
  for (const auto& [id, v] : votes) {
    if (fixed.count(id)) continue;
    if (auto m = majority_vote(v))
      out.labels[id] = *m;
    else
      out.ties.push_back(id);
  }
  return out;
}

AnnotatorLabels annotator_labels(const std::vector<AnnotationRecord>& records, Level level) {
  AnnotatorLabels out;
  for (const auto& r : records)
    if (r.annotator_id != kConsensusAnnotator) out[r.annotator_id][r.instance_id] = project(r.fine, level);
  return out;
}

EvalReport make_report(const std::vector<std::string>& gold, const std::vector<std::string>& pred, Level level) {
  EvalReport r;
  r.level = level;
  r.confusion = confusion_matrix(gold, pred, level_classes(level));
  r.n = r.confusion.total();
  r.per_class = per_class_f1(r.confusion);
  r.macro_f1 = macro_f1(r.confusion);
  r.cohen_kappa = cohen_kappa(r.confusion);
  return r;
}

RunEvaluation evaluate_run(const std::map<std::string, FineLabel>& gold, const std::vector<Prediction>& predictions,
                           Level level, const std::map<std::string, int>* decades) {
  RunEvaluation out;
  std::vector<std::string> g, p;
  std::map<int, std::pair<std::vector<std::string>, std::vector<std::string>>> per_decade;
  std::map<std::string, bool> predicted;
  for (const auto& pr : predictions) {
    predicted[pr.instance_id] = true;
    auto it = gold.find(pr.instance_id);
    if (it == gold.end()) {
      ++out.predictions_only;
      continue;
    }
    if (pr.status != PredictionStatus::Ok || !pr.fine) {
      ++out.excluded_status[std::string(to_string(pr.status))];
      continue;
    }
    g.push_back(project(it->second, level));
    p.push_back(project(*pr.fine, level));
    if (decades)
      if (auto d = decades->find(pr.instance_id); d != decades->end()) {
        per_decade[d->second].first.push_back(g.back());
        per_decade[d->second].second.push_back(p.back());
      }
  }
  for (const auto& [id, label] : gold)
    if (!predicted.count(id)) ++out.gold_only;
  if (g.empty()) throw EvalError(EvalError::Kind::EmptyIntersection, "no prediction matches a gold instance");
  out.overall = make_report(g, p, level);
  for (const auto& [decade, gp] : per_decade) out.by_decade[decade] = make_report(gp.first, gp.second, level);
  return out;
}

nlohmann::json evaluation_document(const GoldConsensus& gold, const std::vector<Prediction>& predictions,
                                   const std::map<std::string, int>* decades) {
  return {{"gold_ties", gold.ties},
          {"high", evaluate_run(gold.labels, predictions, Level::High, decades)},
          {"fine", evaluate_run(gold.labels, predictions, Level::Fine, decades)}};
}

// --- serialization ------------------------------------------------------------

void to_json(nlohmann::json& j, const ConfusionMatrix& cm) { j = {{"classes", cm.classes}, {"counts", cm.counts}}; }
void to_json(nlohmann::json& j, const RealMatrix& m) { j = {{"classes", m.classes}, {"values", m.values}}; }

void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& s : r.per_class)
    per.push_back({{"label", s.label},
                   {"precision", s.precision},
                   {"recall", s.recall},
                   {"f1", s.f1},
                   {"support", s.support},
                   {"predicted", s.predicted}});
  j = {{"level", to_string(r.level)}, {"n", r.n},           {"macro_f1", r.macro_f1},
       {"cohen_kappa", r.cohen_kappa}, {"per_class", per}, {"confusion", r.confusion}};
}

void to_json(nlohmann::json& j, const RunEvaluation& r) {
  nlohmann::json dec = nlohmann::json::object();
  for (const auto& [d, rep] : r.by_decade) dec[std::to_string(d)] = rep;
  j = {{"overall", r.overall},
       {"by_decade", dec},
       {"gold_only", r.gold_only},
       {"predictions_only", r.predictions_only},
       {"excluded_status", r.excluded_status}};
}

namespace {

std::string fixed(double v, int prec = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  // Width in code points so umlauts do not skew columns.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  if (cps < w) s.append(w - cps, ' ');
  return s;
}

}  // namespace

std::string render_text(const EvalReport& r) {
  std::ostringstream o;
  o << "level " << to_string(r.level) << "  n=" << r.n << "  macro F1 " << fixed(r.macro_f1) << "  kappa "
    << fixed(r.cohen_kappa) << "\n\n";
  std::size_t w = 8;
  for (const auto& c : r.confusion.classes) w = std::max(w, c.size() + 2);
  o << pad("class", w) << pad("P", 8) << pad("R", 8) << pad("F1", 8) << "support\n";
  for (const auto& s : r.per_class) {
    if (s.support == 0 && s.predicted == 0) continue;
    o << pad(s.label, w) << pad(fixed(s.precision), 8) << pad(fixed(s.recall), 8) << pad(fixed(s.f1), 8)
      << s.support << "\n";
  }
  o << "\nconfusion (rows gold, columns predicted)\n" << pad("", w);
  for (std::size_t k = 0; k < r.confusion.classes.size(); ++k) o << pad("[" + std::to_string(k) + "]", 6);
  o << "\n";
  for (std::size_t g = 0; g < r.confusion.classes.size(); ++g) {
    o << pad("[" + std::to_string(g) + "] " + r.confusion.classes[g], w);
    for (long c : r.confusion.counts[g]) o << pad(std::to_string(c), 6);
    o << "\n";
  }
  return o.str();
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "gold\\pred";
  for (const auto& c : cm.classes) out += "," + io::csv_field(c);
  out += "\n";
  for (std::size_t g = 0; g < cm.classes.size(); ++g) {
    out += io::csv_field(cm.classes[g]);
    for (long c : cm.counts[g]) out += "," + std::to_string(c);
    out += "\n";
  }
  return out;
}

std::string confusion_csv(const RealMatrix& m) {
  std::string out = "gold\\pred";
  for (const auto& c : m.classes) out += "," + io::csv_field(c);
  out += "\n";
  for (std::size_t g = 0; g < m.classes.size(); ++g) {
    out += io::csv_field(m.classes[g]);
    for (double v : m.values[g]) out += "," + fixed(v, 6);
    out += "\n";
  }
  return out;
}

}  // namespace parlframe
