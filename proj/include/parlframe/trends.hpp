#pragma once

// Per-decade label shares, trend correlation between runs, and the keyword
// subset stability test.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "parlframe/evaluation.hpp"
#include "parlframe/extraction.hpp"
#include "parlframe/llm.hpp"
#include "parlframe/taxonomy.hpp"

namespace parlframe {

class TrendError : public std::runtime_error {
 public:
  enum class Kind { EmptyDecadeSet, DegenerateSeries, TooShort, InfeasibleConstraints, MissingYear };
  TrendError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Inclusive year range. A decade is excluded when any of its years falls inside.
struct YearRange {
  int first = 0;
  int last = 0;
  bool excludes_decade(int decade) const { return first <= decade + 9 && decade <= last; }
  friend bool operator==(const YearRange&, const YearRange&) = default;
};

/// 1933-1949 for migrant trends, nothing for women.
std::vector<YearRange> default_exclusions(TargetGroup target);
/// "1933-1949" or "1933:1949".
YearRange parse_year_range(std::string_view text);

/// A prediction joined with the instance fields trend analysis needs.
struct TrendItem {
  std::string instance_id;
  int year = 0;
  std::string keyword;
  PredictionStatus status = PredictionStatus::Ok;
  std::optional<HighLevel> high;
  std::optional<FineLabel> fine;
};

/// Inner join on instance id, in prediction order. Unmatched predictions are
/// counted in `unmatched` when given.
std::vector<TrendItem> join_predictions(const std::vector<Instance>& instances,
                                        const std::vector<Prediction>& predictions, long* unmatched = nullptr);

struct TrendPoint {
  int decade = 0;
  double share = 0;  // percent
  long count = 0;    // numerator
  long n = 0;        // denominator
};

struct TrendSeries {
  std::string label;
  std::vector<TrendPoint> points;  // ascending decade, excluded decades absent
};

struct TrendSet {
  std::string kind;  // "high" or "subtypes"
  std::vector<TrendSeries> series;
  std::vector<YearRange> exclusions;
  long non_ok = 0;  // unparseable and backend_error items, outside every denominator
};

/// Solidarity, anti-solidarity and mixed shares; none counts in the denominator only.
TrendSet decade_shares_high(const std::vector<TrendItem>& items, const std::vector<YearRange>& exclusions);
/// The 8 stance subtypes, normalized over subtype-labelled items per decade.
TrendSet decade_shares_subtypes(const std::vector<TrendItem>& items, const std::vector<YearRange>& exclusions);

struct PearsonResult {
  double r = 0;
  double p = 1;
  long n = 0;
};

/// Sample correlation with a two-sided t-test p-value (n-2 degrees of freedom).
/// Throws TooShort (n < 3 or unequal lengths) or DegenerateSeries.
PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y);
/// Two-sided p for a correlation r over n points.
double pearson_p_value(double r, long n);

struct TrendCorrelation {
  std::string label;
  bool high_level = false;
  double r = 0;
  double p = 1;
  long n_decades = 0;
};

struct TrendCorrelationTable {
  std::vector<TrendCorrelation> rows;
  std::vector<std::string> warnings;  // rows omitted, with the reason
};

/// Per-label correlation of two runs' shares over their shared decades.
/// Level::High gives the three high-level rows; Level::Fine adds the eight
/// subtype rows under their stance.
TrendCorrelationTable trend_correlation(const std::vector<TrendItem>& a, const std::vector<TrendItem>& b, Level level,
                                        const std::vector<YearRange>& exclusions);

struct StabilityParams {
  int num_subsets = 200;
  int min_keywords = 5;
  double min_dataset_share = 0.10;
  double min_timeline_span = 0.75;
  std::uint64_t seed = 0;
  int max_draws = 10000;  // per subset
  std::vector<YearRange> exclusions;
};

struct KeywordSubset {
  std::vector<std::string> keywords;  // sorted
  long instances = 0;
  double dataset_share = 0;
  double timeline_span = 0;
  int draws = 0;  // attempts until accepted
};

struct LabelStability {
  HighLevel label = HighLevel::Solidarity;
  double mean_r = 0;
  double q25 = 0;
  long pairs = 0;    // correlations computed
  long skipped = 0;  // pairs with < 3 shared decades or a constant series
};

struct StabilityReport {
  StabilityParams params;
  long keyword_count = 0;
  long pair_count = 0;  // C(num_subsets, 2) = pairs + skipped for every label
  std::vector<KeywordSubset> subsets;
  std::vector<LabelStability> labels;
};

/// Rejection-samples keyword subsets and correlates their high-level trends
/// pairwise. Subsets are drawn and correlated in parallel; each subset has its
/// own generator seeded from (seed, index), so the result is independent of
/// thread count. Throws InfeasibleConstraints.
StabilityReport stability_test(const std::vector<TrendItem>& items, const StabilityParams& params);
/// Single-threaded reference with the same output.
StabilityReport stability_test_serial(const std::vector<TrendItem>& items, const StabilityParams& params);

/// Keeps items whose primary keyword is in the allowlist. Throws invalid_argument on an empty list.
std::vector<Instance> restrict_keywords(const std::vector<Instance>& instances,
                                        const std::vector<std::string>& allowlist);
std::vector<TrendItem> restrict_keywords(const std::vector<TrendItem>& items,
                                         const std::vector<std::string>& allowlist);

/// "decade,label,share,n" rows, one per point.
std::string trend_csv(const TrendSet& set);
/// Chart data: {"kind", "exclusions", "non_ok", "series": [{"label", "points": [...]}]}.
nlohmann::json trend_chart_json(const TrendSet& set);

void to_json(nlohmann::json& j, const PearsonResult& r);
void to_json(nlohmann::json& j, const TrendCorrelationTable& t);
void to_json(nlohmann::json& j, const StabilityReport& r);
std::string correlation_csv(const TrendCorrelationTable& t);

}  // namespace parlframe
