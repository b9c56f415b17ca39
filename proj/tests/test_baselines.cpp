#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "lpci/baselines.hpp"
#include "lpci/error.hpp"
#include "lpci/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lpci;

namespace {

BaselineConfig small_baseline(BaselineMethod method) {
  BaselineConfig c;
  c.method = method;
  c.forest.n_trees = 15;
  c.spci.window = 3;
  c.spci.folds = 3;
  c.spci.point_forest.n_trees = 8;
  c.spci.qrf.n_trees = 8;
  c.jobs = 2;
  c.seed = 4;
  return c;
}

PanelDataset small_panel(std::size_t groups, std::size_t times, std::uint64_t seed = 2) {
  SyntheticSpec s;
  s.n_groups = groups;
  s.n_times = times;
  s.seed = seed;
  return generate_synthetic(s);
}

}  // namespace

TEST_CASE("conformal rank and quantile examples") {
  CHECK(conformal_rank(9, 0.1) == 9);
  CHECK(conformal_rank(4, 0.25) == 4);
  CHECK(conformal_rank(99, 0.1) == 90);
  CHECK(conformal_quantile({1, 2, 3, 4, 5, 6, 7, 8, 9}, 0.1) == 9.0);
  CHECK(conformal_quantile({2, -1, 1, 0}, 0.25) == 2.0);
  // Rank past n falls back to the largest score.
  CHECK(conformal_rank(3, 0.1) == 4);
  CHECK(conformal_quantile({0.5, 0.1, 0.3}, 0.1) == 0.5);
  CHECK_THROWS_AS(conformal_quantile({}, 0.1), ArgumentError);
}

TEST_CASE("conformal quantile agrees with the order statistic") {
  std::mt19937_64 rng(17);
  std::exponential_distribution<double> e(1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 97;
    std::vector<double> s(n);
    for (double& v : s) v = e(rng);
    const double alpha = 0.01 + 0.3 * (trial % 7) / 7.0;
    const std::size_t k = static_cast<std::size_t>(
        std::ceil(static_cast<double>(n + 1) * (1.0 - alpha) - 1e-9));
    CHECK(conformal_rank(n, alpha) == k);
    CHECK(conformal_quantile(s, alpha) == oracle::order_statistic(s, std::min(k, n)));
  }
}

TEST_CASE("detect_mode") {
  const auto panel = small_panel(6, 10);
  const auto [tr_t, te_t] = split_longitudinal(panel, 4);
  CHECK(detect_mode(tr_t, te_t) == PanelMode::longitudinal);
  const auto [tr_g, te_g] = split_cross_sectional(panel, 0.5, 0);
  CHECK(detect_mode(tr_g, te_g) == PanelMode::cross_sectional);
  CHECK_THROWS_AS(detect_mode(tr_t, te_g), ArgumentError);
  CHECK(panel_mode_from_string(to_string(PanelMode::longitudinal)) == PanelMode::longitudinal);
  CHECK_THROWS_AS(panel_mode_from_string("diagonal"), ConfigError);
}

TEST_CASE("split conformal gives constant-width intervals") {
  const auto panel = small_panel(20, 10);
  SUBCASE("cross-sectional") {
    const auto [train, test] = split_cross_sectional(panel, 0.25, 3);
    const auto recs = split_conformal(train, test, small_baseline(BaselineMethod::split));
    CHECK(recs.size() == test.n_groups() * (test.n_times() - 1));
    for (const auto& r : recs) {
      CHECK(r.width() == doctest::Approx(recs.front().width()).epsilon(1e-12));
      CHECK(r.y_pred - r.lower == doctest::Approx(r.upper - r.y_pred).epsilon(1e-9));
      CHECK(r.covered == is_covered(r.lower, r.upper, r.y_true));
      CHECK(r.beta == 0.0);
    }
  }
  SUBCASE("longitudinal") {
    const auto [train, test] = split_longitudinal(panel, 5);
    const auto recs = split_conformal(train, test, small_baseline(BaselineMethod::split));
    CHECK(recs.size() == 20 * 4);
    CHECK(recs.front().time == 6);
    for (const auto& r : recs) CHECK(r.width() == doctest::Approx(recs.front().width()).epsilon(1e-12));
  }
}

TEST_CASE("split conformal on an exactly predictable panel has zero width") {
  // Every group is constant in time, so the one-lag forest is exact.
  std::vector<std::string> groups;
  std::vector<double> y;
  for (int g = 0; g < 12; ++g) {
    groups.push_back("g" + std::to_string(10 + g));
    for (int t = 0; t < 6; ++t) y.push_back(3.0 * g);
  }
  const PanelDataset panel(groups, 0, 6, y);
  const auto [train, test] = split_longitudinal(panel, 3);
  auto c = small_baseline(BaselineMethod::split);
  c.forest.min_leaf_size = 1;
  c.forest.bootstrap = false;
  c.include_group_feature = false;
  for (const auto& r : split_conformal(train, test, c)) {
    CHECK(r.width() == 0.0);
    CHECK(r.covered);
  }
}

TEST_CASE("cqr intervals are ordered and reproducible") {
  const auto panel = small_panel(24, 10);
  const auto [train, test] = split_cross_sectional(panel, 0.25, 1);
  const auto c = small_baseline(BaselineMethod::cqr);
  const auto a = cqr(train, test, c);
  CHECK(a.size() == test.n_groups() * 9);
  for (const auto& r : a) {
    CHECK(r.lower <= r.upper);
    CHECK(r.covered == is_covered(r.lower, r.upper, r.y_true));
  }
  CHECK(a == cqr(train, test, c));
  CHECK(a == run_baseline(train, test, c));
}

TEST_CASE("records come out sorted by time then group") {
  const auto panel = small_panel(10, 8);
  const auto [train, test] = split_longitudinal(panel, 3);
  const auto recs = split_conformal(train, test, small_baseline(BaselineMethod::split));
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const auto& p = recs[i - 1];
    const auto& q = recs[i];
    CHECK((p.time < q.time || (p.time == q.time && p.group < q.group)));
  }
}

TEST_CASE("per-group SPCI with one group is the engine on that group") {
  const auto panel = small_panel(1, 24, 8);
  const auto [train, test] = split_longitudinal(panel, 15);
  const auto c = small_baseline(BaselineMethod::spci_per_group);
  const auto got = spci_per_group(train, test, c);
  auto model = LpciModel::fit(train, spci_group_config(c, train.n_times(), 0));
  CHECK(got == model.run_longitudinal(test));
  CHECK(got.size() == 8);
}

TEST_CASE("per-group SPCI runs each group on its own") {
  const auto panel = small_panel(5, 24, 8);
  const auto [train, test] = split_longitudinal(panel, 15);
  auto c = small_baseline(BaselineMethod::spci_per_group);
  const auto all = spci_per_group(train, test, c);
  CHECK(all.size() == 5 * 8);
  c.jobs = 1;
  CHECK(spci_per_group(train, test, c) == all);
  // Group 2 alone, with its per-group seed, gives the same records.
  const std::size_t idx[] = {2};
  auto model = LpciModel::fit(train.select_groups(idx), spci_group_config(c, train.n_times(), 2));
  const auto solo = model.run_longitudinal(test.select_groups(idx));
  std::vector<IntervalRecord> from_all;
  for (const auto& r : all) {
    if (r.group == train.groups()[2]) from_all.push_back(r);
  }
  CHECK(from_all == solo);
}

TEST_CASE("spci_group_config settings") {
  auto c = small_baseline(BaselineMethod::spci_per_group);
  c.alpha = 0.2;
  c.spci.window = 20;
  const auto g = spci_group_config(c, 15, 3);
  CHECK(g.alpha == 0.2);
  CHECK(g.window == 7);
  CHECK(!g.include_group_feature);
  CHECK(g.fold_by == FoldStrategy::time);
  CHECK(g.seed != spci_group_config(c, 15, 4).seed);
}

TEST_CASE("per-group SPCI refuses cross-sectional splits") {
  const auto panel = small_panel(10, 10);
  const auto [train, test] = split_cross_sectional(panel, 0.3, 0);
  CHECK_THROWS_AS(spci_per_group(train, test, small_baseline(BaselineMethod::spci_per_group)),
                  ModeError);
}

TEST_CASE("BaselineConfig json round-trip") {
  auto c = small_baseline(BaselineMethod::cqr);
  c.calibration_fraction = 0.4;
  CHECK(nlohmann::json(c).get<BaselineConfig>() == c);
  CHECK(baseline_method_from_string("spci_per_group") == BaselineMethod::spci_per_group);
  CHECK_THROWS_AS(baseline_method_from_string("jackknife"), ConfigError);
}
