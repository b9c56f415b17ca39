#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "lpci/error.hpp"
#include "lpci/metrics.hpp"

using namespace lpci;

namespace {

IntervalRecord rec(std::string group, std::int64_t time, double lower, double upper, bool covered) {
  IntervalRecord r;
  r.group = std::move(group);
  r.time = time;
  r.lower = lower;
  r.upper = upper;
  r.covered = covered;
  return r;
}

// 10 groups x 10 times; group g covers (10 - g) of its times.
std::vector<IntervalRecord> staircase() {
  std::vector<IntervalRecord> out;
  for (int g = 0; g < 10; ++g) {
    for (int t = 0; t < 10; ++t) {
      out.push_back(rec("g" + std::to_string(g), t, 0.0, 1.0 + g + 0.1 * t, t < 10 - g));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("marginal coverage examples") {
  std::vector<IntervalRecord> r;
  for (int i = 0; i < 10; ++i) r.push_back(rec("a", i, 0, 1, i != 3));
  CHECK(marginal_coverage(r) == doctest::Approx(0.9));
  CHECK_THROWS_AS(marginal_coverage(std::vector<IntervalRecord>{}), ArgumentError);
}

TEST_CASE("tail coverage examples") {
  SUBCASE("one weak group out of ten") {
    std::vector<IntervalRecord> r;
    for (int g = 0; g < 10; ++g) {
      for (int t = 0; t < 2; ++t) r.push_back(rec("g" + std::to_string(g), t, 0, 1, g != 0 || t == 0));
    }
    CHECK(tail_coverage(r) == doctest::Approx(0.5));
  }
  SUBCASE("fewer than ten groups still uses one") {
    std::vector<IntervalRecord> r{rec("a", 0, 0, 1, true), rec("b", 0, 0, 1, false)};
    CHECK(tail_coverage(r) == 0.0);
  }
  SUBCASE("ceil of the fraction") {
    // 11 groups -> ceil(1.1) = 2 worst groups.
    std::vector<IntervalRecord> r;
    for (int g = 0; g < 11; ++g) r.push_back(rec("g" + std::to_string(10 + g), 0, 0, 1, g >= 1));
    r.push_back(rec("g11", 1, 0, 1, false));
    CHECK(tail_coverage(r) == doctest::Approx(0.25));
  }
}

TEST_CASE("width statistics examples") {
  std::vector<IntervalRecord> r{rec("a", 0, 0, 1, true), rec("a", 1, 0, 3, true)};
  const auto w = width_stats(r);
  CHECK(w.mean == 2.0);
  CHECK(w.std == 1.0);
  CHECK(w.cov == 0.5);
  std::vector<IntervalRecord> flat{rec("a", 0, 1, 3, true), rec("b", 0, -1, 1, true)};
  CHECK(width_stats(flat).cov == 0.0);
  std::vector<IntervalRecord> zero{rec("a", 0, 1, 1, true)};
  CHECK_THROWS_AS(width_stats(zero), ArgumentError);
  const auto report = make_report(zero);
  CHECK(!report.width_cov.has_value());
  CHECK(report.width_mean == 0.0);
}

TEST_CASE("filter_last_k keeps each group's latest times") {
  std::vector<IntervalRecord> r;
  for (int t = 1; t <= 30; ++t) {
    r.push_back(rec("a", t, 0, 1, true));
    r.push_back(rec("b", t, 0, 1, true));
  }
  const auto f = filter_last_k(r, 20);
  CHECK(f.size() == 40);
  for (const auto& x : f) CHECK(x.time >= 11);
  CHECK(std::count_if(f.begin(), f.end(), [](const auto& x) { return x.group == "a"; }) == 20);
  CHECK(filter_last_k(r, 30).size() == 60);
  CHECK(filter_last_k(r, 99) == r);
  CHECK(filter_last_k(r, 0).empty());
  // Order is preserved.
  CHECK(f.front() == r[20]);
}

TEST_CASE("metric invariants") {
  auto r = staircase();
  const double marginal = marginal_coverage(r);
  const double tail = tail_coverage(r);
  const auto widths = width_stats(r);
  CHECK(tail <= marginal);
  CHECK(tail == doctest::Approx(0.1));

  SUBCASE("permutation invariance") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 5; ++i) {
      std::shuffle(r.begin(), r.end(), rng);
      CHECK(marginal_coverage(r) == doctest::Approx(marginal).epsilon(1e-12));
      CHECK(tail_coverage(r) == doctest::Approx(tail).epsilon(1e-12));
      CHECK(width_stats(r).cov == doctest::Approx(widths.cov).epsilon(1e-12));
    }
  }
  SUBCASE("width cov is scale invariant") {
    for (auto& x : r) {
      x.lower *= 7.5;
      x.upper *= 7.5;
    }
    CHECK(width_stats(r).cov == doctest::Approx(widths.cov).epsilon(1e-12));
    CHECK(width_stats(r).mean == doctest::Approx(7.5 * widths.mean).epsilon(1e-12));
  }
  SUBCASE("marginal is the size-weighted mean of per-group coverage") {
    r.push_back(rec("g0", 10, 0, 1, false));
    std::map<std::string, double> n;
    for (const auto& x : r) n[x.group] += 1.0;
    double s = 0.0;
    for (const auto& [g, c] : per_group_coverage(r)) s += c * n[g];
    CHECK(marginal_coverage(r) == doctest::Approx(s / static_cast<double>(r.size())).epsilon(1e-12));
  }
}

TEST_CASE("coverage report json round-trip and table") {
  auto r = make_report(staircase(), "last_20", 2.0);
  r.method = "split";
  r.seed = 3;
  CHECK(r.n_records == 100);
  CHECK(r.n_groups == 10);
  CHECK(r.width_mean_standardized() == doctest::Approx(r.width_mean / 2.0));
  const auto back = nlohmann::json::parse(nlohmann::json(r).dump()).get<CoverageReport>();
  CHECK(back.method == "split");
  CHECK(back.marginal_coverage == r.marginal_coverage);
  CHECK(back.per_group_coverage == r.per_group_coverage);
  CHECK(back.width_cov == r.width_cov);
  CHECK(back.target_scale == 2.0);
  auto zero = make_report(std::vector<IntervalRecord>{rec("a", 0, 1, 1, true)});
  CHECK(nlohmann::json(zero).at("width_cov").is_null());
  CHECK(!nlohmann::json(zero).get<CoverageReport>().width_cov.has_value());
  const std::vector<CoverageReport> reports{r};
  const auto table = format_report_table(reports);
  CHECK(table.find("split") != std::string::npos);
}
