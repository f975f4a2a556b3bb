#pragma once

// Agreement and performance statistics between two rater sources.
//
// The core metrics work on plain label strings with an explicit class list, so
// they serve both label levels and arbitrary toy alphabets. Level-aware
// wrappers project fine labels onto the high level where asked.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "parlframe/llm.hpp"
#include "parlframe/taxonomy.hpp"

namespace parlframe {

class EvalError : public std::runtime_error {
 public:
  enum class Kind { LengthMismatch, UnknownClass, EmptyMatrix, EmptyInput, TooFewAnnotators, NoOverlap, EmptyIntersection };
  EvalError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

enum class Level { High, Fine };
std::string_view to_string(Level l);
std::optional<Level> parse_level(std::string_view s);

/// Class list for a level: the 4 high labels, or all 12 fine labels.
std::vector<std::string> level_classes(Level level);

/// Canonical string of a fine label at the requested level.
std::string project(FineLabel label, Level level);

struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<long>> counts;  // [gold][pred]

  long total() const;
  long row_sum(std::size_t gold) const;
  long col_sum(std::size_t pred) const;
  long at(const std::string& gold, const std::string& pred) const;
};

ConfusionMatrix confusion_matrix(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                                 const std::vector<std::string>& classes);

struct ClassScore {
  std::string label;
  double precision = 0, recall = 0, f1 = 0;
  long support = 0;    // gold count
  long predicted = 0;  // predicted count
};

/// Per-class scores in class-list order. Undefined precision or recall gives F1 = 0.
std::vector<ClassScore> per_class_f1(const ConfusionMatrix& cm);

/// Mean F1 over classes that have gold or predicted mass. Throws EmptyMatrix.
double macro_f1(const ConfusionMatrix& cm);

/// Throws EmptyInput or LengthMismatch. κ = 1 when chance agreement is 1 and the sequences agree.
double cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b);
double cohen_kappa(const ConfusionMatrix& cm);

/// Strict-majority label; nullopt on a tie or empty input.
std::optional<std::string> majority_vote(const std::vector<std::string>& labels);
std::optional<FineLabel> majority_vote(const std::vector<FineLabel>& labels);

/// annotator id -> instance id -> label
using AnnotatorLabels = std::map<std::string, std::map<std::string, std::string>>;

struct LooFold {
  std::string annotator;
  long scored = 0;
  long dropped_ties = 0;
  double macro_f1 = 0;
  ConfusionMatrix confusion;  // consensus of the others (gold) × excluded annotator (pred)
};

struct LooResult {
  double mean_macro_f1 = 0;
  std::vector<LooFold> folds;  // folds with nothing to score are omitted
};

/// Each annotator against the strict-majority consensus of the others; ties
/// drop the instance from that fold. Throws TooFewAnnotators with fewer than 2.
LooResult leave_one_out(const AnnotatorLabels& labels, const std::vector<std::string>& classes);
double loo_upper_bound(const AnnotatorLabels& labels, const std::vector<std::string>& classes);

struct RealMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<double>> values;
};

/// Mean of the per-fold confusion matrices. Throws TooFewAnnotators with fewer than 3.
RealMatrix averaged_loo_confusion(const AnnotatorLabels& labels, const std::vector<std::string>& classes);

struct PairKappa {
  std::string a, b;
  long shared = 0;
  double kappa = 0;
};

struct PairwiseKappa {
  double mean = 0;
  std::vector<PairKappa> pairs;  // pairs without shared instances are omitted
};

/// Throws TooFewAnnotators (< 2) or NoOverlap (no pair shares an instance).
PairwiseKappa pairwise_kappa(const AnnotatorLabels& labels);
double avg_pairwise_kappa(const AnnotatorLabels& labels);

/// One human judgement from a gold file.
struct AnnotationRecord {
  std::string instance_id;
  std::string annotator_id;
  FineLabel fine = FineLabel::None;
};

void to_json(nlohmann::json& j, const AnnotationRecord& r);
void from_json(const nlohmann::json& j, AnnotationRecord& r);

inline constexpr std::string_view kConsensusAnnotator = "consensus";

struct GoldConsensus {
  std::map<std::string, FineLabel> labels;  // instance id -> consensus
  std::vector<std::string> ties;            // instances without a strict majority
};

/// Records from annotator "consensus" (an adjudicated export) are taken as-is;
/// other instances get the strict-majority vote of their annotators.
GoldConsensus consensus_labels(const std::vector<AnnotationRecord>& records);

/// Per-annotator label maps at a level, excluding the "consensus" pseudo-annotator.
AnnotatorLabels annotator_labels(const std::vector<AnnotationRecord>& records, Level level);

struct EvalReport {
  Level level = Level::High;
  double macro_f1 = 0;
  std::vector<ClassScore> per_class;
  double cohen_kappa = 0;
  ConfusionMatrix confusion;
  long n = 0;
};

struct RunEvaluation {
  EvalReport overall;
  std::map<int, EvalReport> by_decade;
  long gold_only = 0;       // gold instances without a prediction
  long predictions_only = 0;  // predictions without gold
  std::map<std::string, long> excluded_status;  // non-ok predictions on gold instances, by status
};

EvalReport make_report(const std::vector<std::string>& gold, const std::vector<std::string>& pred, Level level);

/// Scores ok-status predictions on the intersection with the gold set.
/// `decades` (instance id -> decade) enables the per-decade breakdown.
/// Throws EmptyIntersection when nothing can be scored.
RunEvaluation evaluate_run(const std::map<std::string, FineLabel>& gold, const std::vector<Prediction>& predictions,
                           Level level, const std::map<std::string, int>* decades = nullptr);

/// Both levels for one prediction set, as written by `evaluate`:
/// {"gold_ties": [...], "high": RunEvaluation, "fine": RunEvaluation}.
nlohmann::json evaluation_document(const GoldConsensus& gold, const std::vector<Prediction>& predictions,
                                   const std::map<std::string, int>* decades = nullptr);

void to_json(nlohmann::json& j, const ConfusionMatrix& cm);
void to_json(nlohmann::json& j, const RealMatrix& m);
void to_json(nlohmann::json& j, const EvalReport& r);
void to_json(nlohmann::json& j, const RunEvaluation& r);

/// Fixed-width text rendering of a report.
std::string render_text(const EvalReport& r);
/// Header row "gold\pred,<classes...>" then one row per gold class.
std::string confusion_csv(const ConfusionMatrix& cm);
std::string confusion_csv(const RealMatrix& m);

}  // namespace parlframe
