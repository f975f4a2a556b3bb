#include <algorithm>
#include <exception>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "parlframe/trends.hpp"

namespace parlframe {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Prepared {
  std::vector<std::string> keywords;         // sorted, distinct
  std::map<std::string, long> per_keyword;   // item count
  std::map<std::string, std::set<int>> decades;
  long total = 0;
  int first_decade = 0, last_decade = 0;
};

Prepared prepare(const std::vector<TrendItem>& items) {
  Prepared p;
  for (const auto& i : items) {
    if (i.year <= 0) throw TrendError(TrendError::Kind::MissingYear, "instance " + i.instance_id + " has no year");
    ++p.per_keyword[i.keyword];
    p.decades[i.keyword].insert(decade_of(i.year));
  }
  for (const auto& [k, n] : p.per_keyword) p.keywords.push_back(k);
  p.total = static_cast<long>(items.size());
  if (!items.empty()) {
    p.first_decade = std::numeric_limits<int>::max();
    p.last_decade = std::numeric_limits<int>::min();
    for (const auto& [k, ds] : p.decades) {
      p.first_decade = std::min(p.first_decade, *ds.begin());
      p.last_decade = std::max(p.last_decade, *ds.rbegin());
    }
  }
  return p;
}

// Inclusive decade counts: a subset covering 1950..1990 of a 1950..2020 corpus spans 5/8.
double timeline_span(int first, int last, const Prepared& p) {
  return double((last - first) / 10 + 1) / double((p.last_decade - p.first_decade) / 10 + 1);
}

std::optional<KeywordSubset> draw_subset(const Prepared& p, const std::vector<TrendItem>& items,
                                         const StabilityParams& params, std::uint64_t seed,
                                         std::vector<std::map<int, double>>& series) {
  std::mt19937_64 rng(seed);
  const int k = static_cast<int>(p.keywords.size());
  std::uniform_int_distribution<int> size_dist(params.min_keywords, k);
  std::vector<std::string> pool = p.keywords;
  for (int draw = 1; draw <= params.max_draws; ++draw) {
    const int size = size_dist(rng);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::string> chosen(pool.begin(), pool.begin() + size);
    std::sort(chosen.begin(), chosen.end());

    long n = 0;
    int first = std::numeric_limits<int>::max(), last = std::numeric_limits<int>::min();
    for (const auto& kw : chosen) {
      n += p.per_keyword.at(kw);
      const auto& ds = p.decades.at(kw);
      first = std::min(first, *ds.begin());
      last = std::max(last, *ds.rbegin());
    }
    const double share = double(n) / double(p.total);
    const double span = timeline_span(first, last, p);
    if (share < params.min_dataset_share || span < params.min_timeline_span) continue;

    TrendSet set;
    try {
      set = decade_shares_high(restrict_keywords(items, chosen), params.exclusions);
    } catch (const TrendError& e) {
      if (e.kind() == TrendError::Kind::EmptyDecadeSet) continue;
      throw;
    }
    series.assign(set.series.size(), {});
    for (std::size_t s = 0; s < set.series.size(); ++s)
      for (const auto& pt : set.series[s].points) series[s][pt.decade] = pt.share;
    return KeywordSubset{std::move(chosen), n, share, span, draw};
  }
  return std::nullopt;
}

// NaN marks a skipped pair.
double pair_r(const std::map<int, double>& a, const std::map<int, double>& b) {
  std::vector<double> x, y;
  for (const auto& [d, v] : a)
    if (auto it = b.find(d); it != b.end()) {
      x.push_back(v);
      y.push_back(it->second);
    }
  try {
    return pearson(x, y).r;
  } catch (const TrendError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

double quantile(std::vector<double> v, double q) {
  // Linear interpolation between order statistics.
  std::sort(v.begin(), v.end());
  const double pos = q * double(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

StabilityReport run(const std::vector<TrendItem>& items, const StabilityParams& params, bool parallel) {
  if (params.num_subsets < 2) throw std::invalid_argument("stability test needs at least 2 subsets");
  if (params.min_keywords < 1) throw std::invalid_argument("min_keywords must be positive");
  const Prepared p = prepare(items);
  const int k = static_cast<int>(p.keywords.size());
  if (params.min_keywords > k)
    throw TrendError(TrendError::Kind::InfeasibleConstraints, "min_keywords " + std::to_string(params.min_keywords) +
                                                                  " exceeds the " + std::to_string(k) +
                                                                  " keywords present");

  const int n = params.num_subsets;
  std::vector<std::optional<KeywordSubset>> subsets(n);
  std::vector<std::vector<std::map<int, double>>> series(n);  // [subset][label] decade -> share
  std::vector<char> failed(n, 0);
  std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int i = 0; i < n; ++i) {
    try {
      const std::uint64_t seed = splitmix64(params.seed ^ splitmix64(static_cast<std::uint64_t>(i)));
      subsets[i] = draw_subset(p, items, params, seed, series[i]);
      if (!subsets[i]) failed[i] = 1;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (int i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    if (failed[i])
      throw TrendError(TrendError::Kind::InfeasibleConstraints,
                       "no keyword subset met the constraints within " + std::to_string(params.max_draws) +
                           " draws (subset " + std::to_string(i) + ")");
  }

  const std::size_t labels = series[0].size();
  const long pairs = static_cast<long>(n) * (n - 1) / 2;
  std::vector<std::vector<double>> rs(labels, std::vector<double>(pairs));

#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int i = 0; i < n - 1; ++i) {
    // Row i of the upper triangle starts after i rows of decreasing length.
    long base = static_cast<long>(i) * (2L * n - i - 1) / 2;
    for (int j = i + 1; j < n; ++j, ++base)
      for (std::size_t l = 0; l < labels; ++l) rs[l][base] = pair_r(series[i][l], series[j][l]);
  }

  StabilityReport rep;
  rep.params = params;
  rep.keyword_count = k;
  rep.pair_count = pairs;
  for (auto& s : subsets) rep.subsets.push_back(std::move(*s));
  const HighLevel order[] = {HighLevel::Solidarity, HighLevel::AntiSolidarity, HighLevel::Mixed};
  for (std::size_t l = 0; l < labels; ++l) {
    LabelStability ls;
    ls.label = order[l];
    std::vector<double> valid;
    for (double r : rs[l])
      if (!std::isnan(r)) valid.push_back(r);
    ls.pairs = static_cast<long>(valid.size());
    ls.skipped = pairs - ls.pairs;
    if (!valid.empty()) {
      double sum = 0;
      for (double r : valid) sum += r;
      ls.mean_r = sum / double(valid.size());
      ls.q25 = quantile(valid, 0.25);
    } else {
      ls.mean_r = ls.q25 = std::numeric_limits<double>::quiet_NaN();
    }
    rep.labels.push_back(ls);
  }
  return rep;
}

}  // namespace

StabilityReport stability_test(const std::vector<TrendItem>& items, const StabilityParams& params) {
  return run(items, params, true);
}

StabilityReport stability_test_serial(const std::vector<TrendItem>& items, const StabilityParams& params) {
  return run(items, params, false);
}

void to_json(nlohmann::json& j, const StabilityReport& r) {
  nlohmann::json subsets = nlohmann::json::array();
  for (const auto& s : r.subsets)
    subsets.push_back({{"keywords", s.keywords},
                       {"instances", s.instances},
                       {"dataset_share", s.dataset_share},
                       {"timeline_span", s.timeline_span},
                       {"draws", s.draws}});
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& l : r.labels) {
    // All-skipped labels have no mean; JSON has no NaN, so they become null.
    auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    labels.push_back({{"label", to_string(l.label)},
                      {"mean_r", num(l.mean_r)},
                      {"q25", num(l.q25)},
                      {"pairs", l.pairs},
                      {"skipped", l.skipped}});
  }
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& e : r.params.exclusions) ex.push_back({{"first", e.first}, {"last", e.last}});
  j = {{"params",
        {{"num_subsets", r.params.num_subsets},
         {"min_keywords", r.params.min_keywords},
         {"min_dataset_share", r.params.min_dataset_share},
         {"min_timeline_span", r.params.min_timeline_span},
         {"seed", r.params.seed},
         {"max_draws", r.params.max_draws},
         {"exclusions", ex}}},
       {"keyword_count", r.keyword_count},
       {"pair_count", r.pair_count},
       {"labels", labels},
       {"subsets", subsets}};
}

}  // namespace parlframe
