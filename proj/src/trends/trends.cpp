#include "parlframe/trends.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

#include "parlframe/io.hpp"
#include "parlframe/text.hpp"

namespace parlframe {

std::vector<YearRange> default_exclusions(TargetGroup target) {
  if (target == TargetGroup::Migrant) return {{1933, 1949}};
  return {};
}

YearRange parse_year_range(std::string_view text) {
  const auto sep = text.find_first_of("-:");
  auto num = [&](std::string_view s) {
    s = text::trim(s);
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
      throw std::invalid_argument("invalid year range \"" + std::string(text) + "\"");
    return v;
  };
  if (sep == std::string_view::npos) throw std::invalid_argument("invalid year range \"" + std::string(text) + "\"");
  YearRange r{num(text.substr(0, sep)), num(text.substr(sep + 1))};
  if (r.first > r.last) throw std::invalid_argument("year range ends before it starts: " + std::string(text));
  return r;
}

std::vector<TrendItem> join_predictions(const std::vector<Instance>& instances,
                                        const std::vector<Prediction>& predictions, long* unmatched) {
  std::unordered_map<std::string, const Instance*> by_id;
  for (const auto& i : instances) by_id.emplace(i.id, &i);
  std::vector<TrendItem> out;
  out.reserve(predictions.size());
  long missing = 0;
  for (const auto& p : predictions) {
    auto it = by_id.find(p.instance_id);
    if (it == by_id.end()) {
      ++missing;
      continue;
    }
    out.push_back({p.instance_id, it->second->year, it->second->keyword, p.status, p.high, p.fine});
  }
  if (unmatched) *unmatched = missing;
  return out;
}

namespace {

bool excluded(int decade, const std::vector<YearRange>& exclusions) {
  return std::any_of(exclusions.begin(), exclusions.end(), [&](const YearRange& r) { return r.excludes_decade(decade); });
}

bool usable(const TrendItem& item) {
  return item.status == PredictionStatus::Ok && item.high.has_value() && item.fine.has_value();
}

void check_years(const std::vector<TrendItem>& items) {
  for (const auto& i : items)
    if (i.year <= 0) throw TrendError(TrendError::Kind::MissingYear, "instance " + i.instance_id + " has no year");
}

// numerator[label][decade], denominator[decade]
TrendSet build(std::string kind, const std::vector<std::string>& labels,
               const std::map<std::string, std::map<int, long>>& num, const std::map<int, long>& den,
               const std::vector<YearRange>& exclusions, long non_ok) {
  TrendSet set;
  set.kind = std::move(kind);
  set.exclusions = exclusions;
  set.non_ok = non_ok;
  std::vector<int> decades;
  for (const auto& [d, n] : den)
    if (n > 0 && !excluded(d, exclusions)) decades.push_back(d);
  if (decades.empty()) throw TrendError(TrendError::Kind::EmptyDecadeSet, "no decade has labelled instances");
  for (const auto& label : labels) {
    TrendSeries s;
    s.label = label;
    const auto row = num.find(label);
    for (int d : decades) {
      TrendPoint p;
      p.decade = d;
      p.n = den.at(d);
      if (row != num.end())
        if (auto c = row->second.find(d); c != row->second.end()) p.count = c->second;
      p.share = 100.0 * double(p.count) / double(p.n);
      s.points.push_back(p);
    }
    set.series.push_back(std::move(s));
  }
  return set;
}

const std::vector<HighLevel> kTrendHigh{HighLevel::Solidarity, HighLevel::AntiSolidarity, HighLevel::Mixed};

std::vector<FineLabel> stance_subtypes() {
  std::vector<FineLabel> out;
  for (auto f : kModelFineLabels)
    if (subtype_of(f)) out.push_back(f);
  return out;
}

}  // namespace

TrendSet decade_shares_high(const std::vector<TrendItem>& items, const std::vector<YearRange>& exclusions) {
  check_years(items);
  std::map<std::string, std::map<int, long>> num;
  std::map<int, long> den;
  long non_ok = 0;
  for (const auto& i : items) {
    if (!usable(i)) {
      ++non_ok;
      continue;
    }
    const int d = decade_of(i.year);
    ++den[d];
    if (*i.high != HighLevel::None) ++num[std::string(to_string(*i.high))][d];
  }
  std::vector<std::string> labels;
  for (auto h : kTrendHigh) labels.emplace_back(to_string(h));
  return build("high", labels, num, den, exclusions, non_ok);
}

TrendSet decade_shares_subtypes(const std::vector<TrendItem>& items, const std::vector<YearRange>& exclusions) {
  check_years(items);
  std::map<std::string, std::map<int, long>> num;
  std::map<int, long> den;
  long non_ok = 0;
  for (const auto& i : items) {
    if (!usable(i)) {
      ++non_ok;
      continue;
    }
    // Only predictions naming one of the eight subtypes enter the denominator.
    if (!subtype_of(*i.fine) || !is_model_facing(*i.fine)) continue;
    const int d = decade_of(i.year);
    ++den[d];
    ++num[std::string(to_string(*i.fine))][d];
  }
  std::vector<std::string> labels;
  for (auto f : stance_subtypes()) labels.emplace_back(to_string(f));
  return build("subtypes", labels, num, den, exclusions, non_ok);
}

PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw TrendError(TrendError::Kind::TooShort, "series differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw TrendError(TrendError::Kind::TooShort, "correlation needs at least 3 points");
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  if (*xmin == *xmax || *ymin == *ymax) throw TrendError(TrendError::Kind::DegenerateSeries, "series is constant");

  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  PearsonResult res;
  res.n = static_cast<long>(n);
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  res.p = pearson_p_value(res.r, res.n);
  return res;
}

double pearson_p_value(double r, long n) {
  if (n < 3) throw TrendError(TrendError::Kind::TooShort, "correlation needs at least 3 points");
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = double(n - 2);
  const double t = std::abs(r) * std::sqrt(df / (1.0 - r * r));
  const boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
}

namespace {

const TrendSeries* find_series(const TrendSet& s, const std::string& label) {
  for (const auto& x : s.series)
    if (x.label == label) return &x;
  return nullptr;
}

long total_count(const TrendSeries& s) {
  long t = 0;
  for (const auto& p : s.points) t += p.count;
  return t;
}

}  // namespace

TrendCorrelationTable trend_correlation(const std::vector<TrendItem>& a, const std::vector<TrendItem>& b, Level level,
                                        const std::vector<YearRange>& exclusions) {
  const TrendSet ha = decade_shares_high(a, exclusions), hb = decade_shares_high(b, exclusions);
  std::optional<TrendSet> sa, sb;
  if (level == Level::Fine) {
    // A run without any subtype prediction has no subtype grid; its rows are omitted below.
    try {
      sa = decade_shares_subtypes(a, exclusions);
      sb = decade_shares_subtypes(b, exclusions);
    } catch (const TrendError& e) {
      if (e.kind() != TrendError::Kind::EmptyDecadeSet) throw;
    }
  }

  TrendCorrelationTable table;
  auto add = [&](const std::string& label, const TrendSet* x, const TrendSet* y, bool high) {
    const TrendSeries* sx = x ? find_series(*x, label) : nullptr;
    const TrendSeries* sy = y ? find_series(*y, label) : nullptr;
    if (!sx || !sy || total_count(*sx) == 0 || total_count(*sy) == 0) {
      table.warnings.push_back(label + ": label absent in one run");
      return;
    }
    std::map<int, double> ya;
    for (const auto& p : sy->points) ya[p.decade] = p.share;
    std::vector<double> xs, ys;
    for (const auto& p : sx->points)
      if (auto it = ya.find(p.decade); it != ya.end()) {
        xs.push_back(p.share);
        ys.push_back(it->second);
      }
    try {
      const auto r = pearson(xs, ys);
      table.rows.push_back({label, high, r.r, r.p, r.n});
    } catch (const TrendError& e) {
      table.warnings.push_back(label + ": " + e.what());
    }
  };

  for (auto stance : {HighLevel::Solidarity, HighLevel::AntiSolidarity}) {
    if (level == Level::Fine)
      for (auto st : kSubtypes)
        add(std::string(to_string(*combine(stance, st))), sa ? &*sa : nullptr, sb ? &*sb : nullptr, false);
    add(std::string(to_string(stance)), &ha, &hb, true);
  }
  add(std::string(to_string(HighLevel::Mixed)), &ha, &hb, true);
  return table;
}

namespace {

template <class T, class Key>
std::vector<T> filter_by_keyword(const std::vector<T>& xs, const std::vector<std::string>& allowlist, Key key) {
  if (allowlist.empty()) throw std::invalid_argument("keyword allowlist is empty");
  const std::set<std::string> allow(allowlist.begin(), allowlist.end());
  std::vector<T> out;
  for (const auto& x : xs)
    if (allow.count(key(x))) out.push_back(x);
  return out;
}

}  // namespace

std::vector<Instance> restrict_keywords(const std::vector<Instance>& instances,
                                        const std::vector<std::string>& allowlist) {
  return filter_by_keyword(instances, allowlist, [](const Instance& i) { return i.keyword; });
}

std::vector<TrendItem> restrict_keywords(const std::vector<TrendItem>& items,
                                         const std::vector<std::string>& allowlist) {
  return filter_by_keyword(items, allowlist, [](const TrendItem& i) { return i.keyword; });
}

// --- output -------------------------------------------------------------------

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string trend_csv(const TrendSet& set) {
  std::string out = "decade,label,share,n\n";
  for (const auto& s : set.series)
    for (const auto& p : s.points)
      out += std::to_string(p.decade) + "," + io::csv_field(s.label) + "," + num(p.share) + "," + std::to_string(p.n) +
             "\n";
  return out;
}

nlohmann::json trend_chart_json(const TrendSet& set) {
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& r : set.exclusions) ex.push_back({{"first", r.first}, {"last", r.last}});
  nlohmann::json series = nlohmann::json::array();
  for (const auto& s : set.series) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : s.points)
      pts.push_back({{"decade", p.decade}, {"share", p.share}, {"count", p.count}, {"n", p.n}});
    series.push_back({{"label", s.label}, {"points", pts}});
  }
  return {{"kind", set.kind}, {"unit", "percent"}, {"exclusions", ex}, {"non_ok", set.non_ok}, {"series", series}};
}

void to_json(nlohmann::json& j, const PearsonResult& r) { j = {{"r", r.r}, {"p", r.p}, {"n", r.n}}; }

void to_json(nlohmann::json& j, const TrendCorrelationTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back(
        {{"label", r.label}, {"high_level", r.high_level}, {"r", r.r}, {"p", r.p}, {"n_decades", r.n_decades}});
  j = {{"rows", rows}, {"warnings", t.warnings}};
}

std::string correlation_csv(const TrendCorrelationTable& t) {
  std::string out = "label,high_level,r,p,n_decades\n";
  for (const auto& r : t.rows)
    out += io::csv_field(r.label) + "," + (r.high_level ? "true" : "false") + "," + num(r.r) + "," + sci(r.p) + "," +
           std::to_string(r.n_decades) + "\n";
  return out;
}

}  // namespace parlframe
