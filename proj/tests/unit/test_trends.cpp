#include "doctest.h"

#include <omp.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "parlframe/trends.hpp"

using namespace parlframe;

namespace {

using F = FineLabel;

TrendItem item(int year, F fine, std::string keyword = "Flüchtlinge",
               PredictionStatus status = PredictionStatus::Ok) {
  static int counter = 0;
  TrendItem t;
  t.instance_id = "t" + std::to_string(++counter);
  t.year = year;
  t.keyword = std::move(keyword);
  t.status = status;
  if (status == PredictionStatus::Ok) {
    t.fine = fine;
    t.high = fine_to_high(fine);
  }
  return t;
}

void add(std::vector<TrendItem>& v, int n, int year, F fine, const std::string& keyword = "Flüchtlinge") {
  for (int i = 0; i < n; ++i) v.push_back(item(year, fine, keyword));
}

const TrendSeries& series(const TrendSet& s, std::string_view label) {
  for (const auto& x : s.series)
    if (x.label == label) return x;
  FAIL("no series " << label);
  throw 0;
}

double share_at(const TrendSet& s, std::string_view label, int decade) {
  for (const auto& p : series(s, label).points)
    if (p.decade == decade) return p.share;
  FAIL("no point for " << decade);
  return -1;
}

bool has_decade(const TrendSet& s, int decade) {
  for (const auto& p : s.series.front().points)
    if (p.decade == decade) return true;
  return false;
}

template <class Fn>
TrendError::Kind trend_error_kind(Fn&& f) {
  try {
    f();
  } catch (const TrendError& e) {
    return e.kind();
  }
  FAIL("expected TrendError");
  return TrendError::Kind::TooShort;
}

// Labels drawn with decade-dependent probabilities, independent of the keyword.
std::vector<TrendItem> synthetic_corpus(int keywords, int per_cell, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TrendItem> out;
  for (int d = 1950; d <= 2020; d += 10) {
    const double t = (d - 1950) / 70.0;
    const double sol = 0.60 - 0.35 * t, anti = 0.05 + 0.40 * t, mixed = 0.05 + 0.20 * t * t;
    for (int k = 0; k < keywords; ++k)
      for (int i = 0; i < per_cell; ++i) {
        const double x = u(rng);
        const F label = x < sol                ? F::SolidarityCompassionate
                        : x < sol + anti       ? F::AntiSolidarityGroupBased
                        : x < sol + anti + mixed ? F::Mixed
                                                 : F::None;
        out.push_back(item(d + (i % 10), label, "kw" + std::to_string(k)));
      }
  }
  return out;
}

}  // namespace

TEST_CASE("high-level shares keep none in the denominator") {
  std::vector<TrendItem> v;
  add(v, 5, 1961, F::SolidarityGroupBased);
  add(v, 2, 1965, F::AntiSolidarityEmpathic);
  add(v, 1, 1969, F::Mixed);
  add(v, 2, 1960, F::None);
  add(v, 3, 1972, F::None);
  v.push_back(item(1961, F::None, "x", PredictionStatus::Unparseable));
  v.push_back(item(1961, F::None, "x", PredictionStatus::BackendError));
  add(v, 4, 1941, F::SolidarityGroupBased);
  const auto s = decade_shares_high(v, {{1933, 1949}});
  CHECK(share_at(s, "solidarity", 1960) == 50.0);
  CHECK(share_at(s, "anti-solidarity", 1960) == 20.0);
  CHECK(share_at(s, "mixed", 1960) == 10.0);
  for (auto label : {"solidarity", "anti-solidarity", "mixed"}) CHECK(share_at(s, label, 1970) == 0.0);
  CHECK_FALSE(has_decade(s, 1940));
  CHECK(s.non_ok == 2);
  CHECK(series(s, "solidarity").points.front().n == 10);
  CHECK(s.series.size() == 3);

  CHECK(has_decade(decade_shares_high(v, {}), 1940));
  CHECK(trend_error_kind([] { decade_shares_high({}, {}); }) == TrendError::Kind::EmptyDecadeSet);
  CHECK(trend_error_kind([&] { decade_shares_high({item(1945, F::None)}, {{1933, 1949}}); }) ==
        TrendError::Kind::EmptyDecadeSet);
  CHECK(trend_error_kind([] { decade_shares_high({item(0, F::None)}, {}); }) == TrendError::Kind::MissingYear);
}

TEST_CASE("exclusion ranges cover every decade they touch") {
  const YearRange r{1933, 1949};
  CHECK(r.excludes_decade(1930));
  CHECK(r.excludes_decade(1940));
  CHECK_FALSE(r.excludes_decade(1920));
  CHECK_FALSE(r.excludes_decade(1950));
  CHECK(parse_year_range("1933-1949") == r);
  CHECK(parse_year_range(" 1933 : 1949 ") == r);
  CHECK_THROWS_AS(parse_year_range("1949-1933"), std::invalid_argument);
  CHECK_THROWS_AS(parse_year_range("1933"), std::invalid_argument);
  CHECK(default_exclusions(TargetGroup::Migrant) == std::vector<YearRange>{r});
  CHECK(default_exclusions(TargetGroup::Woman).empty());
}

TEST_CASE("subtype shares normalize over the eight subtypes") {
  std::vector<TrendItem> v;
  add(v, 4, 1990, F::SolidarityGroupBased);
  add(v, 2, 1991, F::SolidarityCompassionate);
  add(v, 1, 1992, F::AntiSolidarityGroupBased);
  add(v, 1, 1993, F::AntiSolidarityExchangeBased);
  add(v, 7, 1994, F::None);
  add(v, 3, 1995, F::Mixed);
  add(v, 3, 2001, F::Mixed);  // 2000 has no subtype mass
  add(v, 2, 2011, F::AntiSolidarityEmpathic);
  const auto s = decade_shares_subtypes(v, {});
  CHECK(s.series.size() == 8);
  CHECK(share_at(s, "solidarity:group-based", 1990) == 50.0);
  CHECK(share_at(s, "solidarity:compassionate", 1990) == 25.0);
  CHECK(share_at(s, "anti-solidarity:group-based", 1990) == 12.5);
  CHECK(share_at(s, "anti-solidarity:exchange-based", 1990) == 12.5);
  CHECK(share_at(s, "solidarity:empathic", 1990) == 0.0);
  CHECK_FALSE(has_decade(s, 2000));
  CHECK(share_at(s, "anti-solidarity:empathic", 2010) == 100.0);
}

TEST_CASE("share invariants on random predictions") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> year(1860, 2029), label(0, 11), st(0, 9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TrendItem> v;
    for (int i = 0; i < 400; ++i) {
      const auto status = st(rng) == 0 ? PredictionStatus::Unparseable : PredictionStatus::Ok;
      // Gold-only "unspecified" labels never come from a model; keep to model-facing ones.
      const F f = kModelFineLabels[label(rng) % kModelFineLabels.size()];
      v.push_back(item(year(rng), f, "k", status));
    }
    const auto high = decade_shares_high(v, {{1933, 1949}});
    for (std::size_t p = 0; p < high.series[0].points.size(); ++p) {
      double sum = 0;
      for (const auto& s : high.series) {
        CHECK(s.points[p].share >= 0.0);
        sum += s.points[p].share;
      }
      CHECK(sum <= 100.0 + 1e-9);
      CHECK_FALSE(YearRange{1933, 1949}.excludes_decade(high.series[0].points[p].decade));
    }
    const auto sub = decade_shares_subtypes(v, {{1933, 1949}});
    for (std::size_t p = 0; p < sub.series[0].points.size(); ++p) {
      double sum = 0;
      for (const auto& s : sub.series) sum += s.points[p].share;
      CHECK(std::abs(sum - 100.0) < 1e-9);
    }
  }
}

TEST_CASE("pearson worked values and p-values") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  CHECK(pearson(x, x).r == doctest::Approx(1.0));
  CHECK(pearson(x, x).p == 0.0);
  CHECK(pearson(x, neg).r == doctest::Approx(-1.0));

  const auto r = pearson({1, 2, 3}, {1, 2, 4});
  CHECK(std::abs(r.r - 9.0 / std::sqrt(84.0)) < 1e-12);
  CHECK(std::abs(r.r - 0.98198) < 1e-5);
  // One degree of freedom: Student t is Cauchy, p = 1 - (2/pi) atan|t|.
  const double t1 = r.r * std::sqrt(1.0 / (1.0 - r.r * r.r));
  CHECK(r.p == doctest::Approx(1.0 - 2.0 / std::numbers::pi * std::atan(t1)).epsilon(1e-12));
  // Two degrees of freedom: p = 1 - |t| / sqrt(2 + t^2).
  const auto r4 = pearson({1, 2, 3, 4}, {2, 1, 4, 3});
  const double t2 = std::abs(r4.r) * std::sqrt(2.0 / (1.0 - r4.r * r4.r));
  CHECK(r4.p == doctest::Approx(1.0 - t2 / std::sqrt(2.0 + t2 * t2)).epsilon(1e-12));

  CHECK(trend_error_kind([] { pearson({1, 2}, {1, 2}); }) == TrendError::Kind::TooShort);
  CHECK(trend_error_kind([] { pearson({1, 2, 3}, {1, 2}); }) == TrendError::Kind::TooShort);
  CHECK(trend_error_kind([] { pearson({1, 1, 1}, {1, 2, 3}); }) == TrendError::Kind::DegenerateSeries);
}

TEST_CASE("pearson matches the oracle and is affine invariant") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.1, 10.0), shift(-50.0, 50.0);
  for (int t = 0; t < 300; ++t) {
    const int n = 3 + t % 20;
    std::vector<double> x, y;
    for (int i = 0; i < n; ++i) {
      x.push_back(g(rng));
      y.push_back(0.5 * x.back() + g(rng));
    }
    const auto base = pearson(x, y);
    CHECK(std::abs(base.r - oracle::pearson(x, y)) < 1e-12);
    CHECK(base.r >= -1.0);
    CHECK(base.r <= 1.0);
    CHECK(base.p >= 0.0);
    CHECK(base.p <= 1.0);
    const double a = scale(rng), b = shift(rng);
    std::vector<double> xa, xn;
    for (double v : x) {
      xa.push_back(a * v + b);
      xn.push_back(-a * v + b);
    }
    CHECK(pearson(xa, y).r == doctest::Approx(base.r).epsilon(1e-9));
    CHECK(pearson(xn, y).r == doctest::Approx(-base.r).epsilon(1e-9));
    CHECK(pearson(y, x).r == doctest::Approx(base.r).epsilon(1e-12));
  }
}

TEST_CASE("p-values agree with the published trend correlation table") {
  // (r, p) pairs as printed; every row is consistent with 16 shared decades
  // once the three-digit rounding of r is allowed for.
  const std::vector<std::pair<double, double>> rows{
      {0.560, 2.41e-2}, {0.777, 4.00e-4}, {0.108, 0.691},   {0.915, 7.10e-7},
      {0.966, 1.25e-9}, {0.945, 3.65e-8}, {0.898, 2.29e-6}, {-0.160, 0.553},
      {0.841, 4.44e-5}, {0.976, 1.15e-10}, {0.685, 0.0034},
  };
  for (const auto& [r, p] : rows) {
    CAPTURE(r);
    const double ours = pearson_p_value(r, 16);
    CHECK(std::abs(ours / p - 1.0) < 0.05);
    // Neighbouring decade counts do not fit the strong correlations.
    if (r > 0.9) CHECK(std::abs(pearson_p_value(r, 17) / p - 1.0) > 0.3);
  }
}

TEST_CASE("trend correlation between runs") {
  const std::vector<int> sol_a{1, 2, 3, 4, 5, 6}, sol_b{3, 1, 6, 2, 5, 4}, mixed{2, 0, 1, 3, 0, 2};
  std::vector<TrendItem> a, b;
  std::vector<double> share_a, share_b;
  for (int i = 0; i < 6; ++i) {
    const int year = 1950 + 10 * i;
    add(a, sol_a[i], year, F::SolidarityCompassionate);
    add(a, mixed[i], year, F::Mixed);
    add(a, 10 - sol_a[i] - mixed[i], year, F::None);
    add(b, sol_b[i], year, F::SolidarityCompassionate);
    add(b, mixed[i], year, F::Mixed);
    add(b, 10 - sol_b[i] - mixed[i], year, F::None);
    share_a.push_back(10.0 * sol_a[i]);
    share_b.push_back(10.0 * sol_b[i]);
  }

  const auto self = trend_correlation(a, a, Level::High, {});
  REQUIRE(self.rows.size() == 2);  // anti-solidarity is absent
  for (const auto& r : self.rows) CHECK(r.r == doctest::Approx(1.0));
  CHECK(self.warnings.size() == 1);

  const auto t = trend_correlation(a, b, Level::High, {});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].label == "solidarity");
  CHECK(t.rows[0].high_level);
  CHECK(t.rows[0].n_decades == 6);
  CHECK(std::abs(t.rows[0].r - oracle::pearson(share_a, share_b)) < 1e-12);
  CHECK(t.rows[1].label == "mixed");
  CHECK(t.rows[1].r == doctest::Approx(1.0));

  // Fine level: the only subtype holds 100% of subtype mass in every decade,
  // so its row is degenerate and reported as a warning.
  const auto fine = trend_correlation(a, b, Level::Fine, {});
  REQUIRE(fine.rows.size() == 2);
  CHECK(fine.rows[0].label == "solidarity");
  bool constant_warned = false;
  for (const auto& w : fine.warnings) constant_warned |= w.rfind("solidarity:compassionate:", 0) == 0;
  CHECK(constant_warned);
  CHECK(fine.warnings.size() == 9);  // 7 absent subtypes, 1 constant, anti-solidarity absent

  // Subtype rows sit before their stance row.
  std::vector<TrendItem> c = a, e = b;
  const int gb_c[] = {4, 1, 3, 6, 2, 5}, gb_e[] = {2, 2, 5, 1, 6, 3};
  for (int i = 0; i < 6; ++i) {
    add(c, gb_c[i], 1950 + 10 * i, F::SolidarityGroupBased);
    add(e, gb_e[i], 1950 + 10 * i, F::SolidarityGroupBased);
  }
  const auto layout = trend_correlation(c, e, Level::Fine, {});
  std::vector<std::string> labels;
  for (const auto& r : layout.rows) labels.push_back(r.label);
  CHECK(labels == std::vector<std::string>{"solidarity:group-based", "solidarity:compassionate", "solidarity", "mixed"});
}

TEST_CASE("keyword restriction") {
  std::vector<Instance> insts(4);
  const char* kws[] = {"Ausländer", "Flüchtlinge", "Migranten", "Ausländer"};
  for (int i = 0; i < 4; ++i) {
    insts[i].id = "i" + std::to_string(i);
    insts[i].keyword = kws[i];
  }
  CHECK(restrict_keywords(insts, {"Ausländer", "Flüchtlinge"}).size() == 3);
  CHECK(restrict_keywords(insts, {"Ausländer", "Flüchtlinge", "Migranten"}).size() == 4);
  CHECK(restrict_keywords(insts, {"Asylanten"}).empty());
  CHECK_THROWS_AS(restrict_keywords(insts, {}), std::invalid_argument);
}

TEST_CASE("join and outputs") {
  std::vector<Instance> insts(2);
  insts[0].id = "a";
  insts[0].year = 1955;
  insts[0].keyword = "Ausländer";
  insts[1].id = "b";
  insts[1].year = 1999;
  insts[1].keyword = "Flüchtlinge";
  std::vector<Prediction> preds(3);
  preds[0].instance_id = "b";
  preds[0].high = HighLevel::Mixed;
  preds[0].fine = F::Mixed;
  preds[1].instance_id = "a";
  preds[1].high = HighLevel::Solidarity;
  preds[1].fine = F::SolidarityEmpathic;
  preds[2].instance_id = "zz";
  long unmatched = 0;
  const auto items = join_predictions(insts, preds, &unmatched);
  REQUIRE(items.size() == 2);
  CHECK(unmatched == 1);
  CHECK(items[0].year == 1999);
  CHECK(items[1].keyword == "Ausländer");

  const auto set = decade_shares_high(items, {});
  const auto csv = trend_csv(set);
  CHECK(csv.substr(0, csv.find('\n')) == "decade,label,share,n");
  CHECK(csv.find("1950,solidarity,100.000000,1\n") != std::string::npos);
  CHECK(csv.find("1990,mixed,100.000000,1\n") != std::string::npos);
  const auto j = trend_chart_json(set);
  CHECK(j.at("kind") == "high");
  CHECK(j.at("series").size() == 3);
  CHECK(j.at("series")[0].at("points").size() == 2);
}

TEST_CASE("stability test on a keyword-independent corpus") {
  const auto items = synthetic_corpus(12, 40, 2024);
  StabilityParams params;
  params.seed = 42;
  const auto rep = stability_test(items, params);
  CHECK(rep.pair_count == 19900);
  CHECK(rep.subsets.size() == 200);
  REQUIRE(rep.labels.size() == 3);
  for (const auto& l : rep.labels) {
    CAPTURE(to_string(l.label));
    CHECK(l.pairs + l.skipped == rep.pair_count);
    CHECK(l.mean_r >= 0.95);
    CHECK(l.q25 <= l.mean_r + 1e-12);
  }

  // Constraints, recomputed from the raw items.
  for (const auto& s : rep.subsets) {
    CHECK(s.keywords.size() >= 5);
    long n = 0;
    int lo = 9999, hi = 0;
    for (const auto& it : items)
      if (std::find(s.keywords.begin(), s.keywords.end(), it.keyword) != s.keywords.end()) {
        ++n;
        lo = std::min(lo, decade_of(it.year));
        hi = std::max(hi, decade_of(it.year));
      }
    CHECK(n == s.instances);
    CHECK(double(n) / double(items.size()) >= 0.10);
    CHECK(double((hi - lo) / 10 + 1) / 8.0 >= 0.75);
  }
}

TEST_CASE("stability test is reproducible and thread-count independent") {
  const auto items = synthetic_corpus(9, 15, 7);
  StabilityParams params;
  params.num_subsets = 40;
  params.seed = 123;
  params.exclusions = {{1933, 1949}};
  omp_set_num_threads(4);
  const auto par = nlohmann::json(stability_test(items, params)).dump();
  omp_set_num_threads(1);
  const auto par1 = nlohmann::json(stability_test(items, params)).dump();
  const auto ser = nlohmann::json(stability_test_serial(items, params)).dump();
  CHECK(par == ser);
  CHECK(par1 == ser);
  CHECK(nlohmann::json(stability_test_serial(items, params)).dump() == ser);
  params.seed = 124;
  CHECK(nlohmann::json(stability_test_serial(items, params)).dump() != ser);
  CHECK(stability_test(items, params).pair_count == 40 * 39 / 2);
}

TEST_CASE("stability test degenerate and infeasible inputs") {
  std::vector<TrendItem> flat;
  for (int k = 0; k < 6; ++k)
    for (int d = 1950; d <= 2000; d += 10) add(flat, 3, d, F::None, "k" + std::to_string(k));
  StabilityParams params;
  params.num_subsets = 10;
  const auto rep = stability_test(flat, params);
  for (const auto& l : rep.labels) {
    CHECK(l.pairs == 0);
    CHECK(l.skipped == 45);
    CHECK(std::isnan(l.mean_r));
  }
  CHECK(nlohmann::json(rep).at("labels")[0].at("mean_r").is_null());

  params.min_keywords = 7;
  CHECK(trend_error_kind([&] { stability_test(flat, params); }) == TrendError::Kind::InfeasibleConstraints);
  params.min_keywords = 5;
  params.min_dataset_share = 1.01;
  params.max_draws = 50;
  CHECK(trend_error_kind([&] { stability_test(flat, params); }) == TrendError::Kind::InfeasibleConstraints);
}
