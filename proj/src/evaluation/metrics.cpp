#include <algorithm>
#include <unordered_map>

#include "parlframe/evaluation.hpp"

namespace parlframe {

std::string_view to_string(Level l) { return l == Level::High ? "high" : "fine"; }

std::optional<Level> parse_level(std::string_view s) {
  if (s == "high") return Level::High;
  if (s == "fine") return Level::Fine;
  return std::nullopt;
}

std::vector<std::string> level_classes(Level level) {
  std::vector<std::string> out;
  if (level == Level::High)
    for (auto h : kHighLevels) out.emplace_back(to_string(h));
  else
    for (auto f : kAllFineLabels) out.emplace_back(to_string(f));
  return out;
}

std::string project(FineLabel label, Level level) {
  return level == Level::High ? std::string(to_string(fine_to_high(label))) : std::string(to_string(label));
}

// --- confusion matrix ---------------------------------------------------------

long ConfusionMatrix::total() const {
  long t = 0;
  for (const auto& row : counts)
    for (long c : row) t += c;
  return t;
}

long ConfusionMatrix::row_sum(std::size_t g) const {
  long t = 0;
  for (long c : counts[g]) t += c;
  return t;
}

long ConfusionMatrix::col_sum(std::size_t p) const {
  long t = 0;
  for (const auto& row : counts) t += row[p];
  return t;
}

long ConfusionMatrix::at(const std::string& gold, const std::string& pred) const {
  const auto g = std::find(classes.begin(), classes.end(), gold);
  const auto p = std::find(classes.begin(), classes.end(), pred);
  if (g == classes.end() || p == classes.end()) throw EvalError(EvalError::Kind::UnknownClass, "unknown class");
  return counts[g - classes.begin()][p - classes.begin()];
}

ConfusionMatrix confusion_matrix(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                                 const std::vector<std::string>& classes) {
  if (gold.size() != pred.size())
    throw EvalError(EvalError::Kind::LengthMismatch, "gold has " + std::to_string(gold.size()) +
                                                         " labels, predictions " + std::to_string(pred.size()));
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index.emplace(classes[i], i);
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(classes.size(), std::vector<long>(classes.size(), 0));
  auto idx = [&](const std::string& label) {
    auto it = index.find(label);
    if (it == index.end()) throw EvalError(EvalError::Kind::UnknownClass, "label \"" + label + "\" is not a class");
    return it->second;
  };
  for (std::size_t i = 0; i < gold.size(); ++i) ++cm.counts[idx(gold[i])][idx(pred[i])];
  return cm;
}

std::vector<ClassScore> per_class_f1(const ConfusionMatrix& cm) {
  std::vector<ClassScore> out;
  for (std::size_t k = 0; k < cm.classes.size(); ++k) {
    ClassScore s;
    s.label = cm.classes[k];
    const long tp = cm.counts[k][k];
    s.support = cm.row_sum(k);
    s.predicted = cm.col_sum(k);
    if (s.predicted > 0) s.precision = double(tp) / double(s.predicted);
    if (s.support > 0) s.recall = double(tp) / double(s.support);
    if (s.predicted > 0 && s.support > 0 && tp > 0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    out.push_back(std::move(s));
  }
  return out;
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw EvalError(EvalError::Kind::EmptyMatrix, "confusion matrix is empty");
  double sum = 0;
  int n = 0;
  for (const auto& s : per_class_f1(cm)) {
    if (s.support == 0 && s.predicted == 0) continue;
    sum += s.f1;
    ++n;
  }
  return sum / n;
}

double cohen_kappa(const ConfusionMatrix& cm) {
  const double n = double(cm.total());
  if (n == 0) throw EvalError(EvalError::Kind::EmptyInput, "no items to compare");
  double po = 0, pe = 0;
  for (std::size_t k = 0; k < cm.classes.size(); ++k) {
    po += double(cm.counts[k][k]);
    pe += double(cm.row_sum(k)) * double(cm.col_sum(k));
  }
  po /= n;
  pe /= n * n;
  if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

double cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size())
    throw EvalError(EvalError::Kind::LengthMismatch, "sequences differ in length");
  if (a.empty()) throw EvalError(EvalError::Kind::EmptyInput, "no items to compare");
  std::vector<std::string> classes(a.begin(), a.end());
  classes.insert(classes.end(), b.begin(), b.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  return cohen_kappa(confusion_matrix(a, b, classes));
}

std::optional<std::string> majority_vote(const std::vector<std::string>& labels) {
  std::map<std::string, long> counts;
  for (const auto& l : labels) ++counts[l];
  for (const auto& [label, c] : counts)
    if (2 * c > static_cast<long>(labels.size())) return label;
  return std::nullopt;
}

std::optional<FineLabel> majority_vote(const std::vector<FineLabel>& labels) {
  std::vector<std::string> s;
  for (auto l : labels) s.emplace_back(to_string(l));
  if (auto v = majority_vote(s)) return parse_fine(*v);
  return std::nullopt;
}

// --- multi-annotator ----------------------------------------------------------

LooResult leave_one_out(const AnnotatorLabels& labels, const std::vector<std::string>& classes) {
  if (labels.size() < 2)
    throw EvalError(EvalError::Kind::TooFewAnnotators, "leave-one-out needs at least 2 annotators");
  LooResult result;
  double sum = 0;
  for (const auto& [excluded, own] : labels) {
    LooFold fold;
    fold.annotator = excluded;
    std::vector<std::string> gold, pred;
    for (const auto& [instance, label] : own) {
      std::vector<std::string> others;
      for (const auto& [other, map] : labels) {
        if (other == excluded) continue;
        if (auto it = map.find(instance); it != map.end()) others.push_back(it->second);
      }
      if (others.empty()) continue;
      auto consensus = majority_vote(others);
      if (!consensus) {
        ++fold.dropped_ties;
        continue;
      }
      gold.push_back(*consensus);
      pred.push_back(label);
    }
    if (gold.empty()) continue;
    fold.scored = static_cast<long>(gold.size());
    fold.confusion = confusion_matrix(gold, pred, classes);
    fold.macro_f1 = macro_f1(fold.confusion);
    sum += fold.macro_f1;
    result.folds.push_back(std::move(fold));
  }
  if (result.folds.empty()) throw EvalError(EvalError::Kind::NoOverlap, "no fold has a scorable instance");
  result.mean_macro_f1 = sum / double(result.folds.size());
  return result;
}

double loo_upper_bound(const AnnotatorLabels& labels, const std::vector<std::string>& classes) {
  return leave_one_out(labels, classes).mean_macro_f1;
}

RealMatrix averaged_loo_confusion(const AnnotatorLabels& labels, const std::vector<std::string>& classes) {
  if (labels.size() < 3)
    throw EvalError(EvalError::Kind::TooFewAnnotators, "averaged LOO confusion needs at least 3 annotators");
  const auto loo = leave_one_out(labels, classes);
  RealMatrix m;
  m.classes = classes;
  m.values.assign(classes.size(), std::vector<double>(classes.size(), 0.0));
  for (const auto& f : loo.folds)
    for (std::size_t g = 0; g < classes.size(); ++g)
      for (std::size_t p = 0; p < classes.size(); ++p) m.values[g][p] += double(f.confusion.counts[g][p]);
  for (auto& row : m.values)
    for (auto& v : row) v /= double(loo.folds.size());
  return m;
}

PairwiseKappa pairwise_kappa(const AnnotatorLabels& labels) {
  if (labels.size() < 2) throw EvalError(EvalError::Kind::TooFewAnnotators, "pairwise kappa needs 2 annotators");
  PairwiseKappa out;
  for (auto i = labels.begin(); i != labels.end(); ++i)
    for (auto j = std::next(i); j != labels.end(); ++j) {
      std::vector<std::string> a, b;
      for (const auto& [instance, label] : i->second)
        if (auto it = j->second.find(instance); it != j->second.end()) {
          a.push_back(label);
          b.push_back(it->second);
        }
      if (a.empty()) continue;
      out.pairs.push_back({i->first, j->first, static_cast<long>(a.size()), cohen_kappa(a, b)});
    }
  if (out.pairs.empty()) throw EvalError(EvalError::Kind::NoOverlap, "no two annotators share an instance");
  double sum = 0;
  for (const auto& p : out.pairs) sum += p.kappa;
  out.mean = sum / double(out.pairs.size());
  return out;
}

double avg_pairwise_kappa(const AnnotatorLabels& labels) { return pairwise_kappa(labels).mean; }

}  // namespace parlframe
