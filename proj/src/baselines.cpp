#include "lpci/baselines.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include "lpci/error.hpp"
#include "lpci/rng.hpp"

namespace lpci {

std::string to_string(PanelMode mode) {
  return mode == PanelMode::cross_sectional ? "cross_sectional" : "longitudinal";
}

PanelMode panel_mode_from_string(const std::string& s) {
  if (s == "cross_sectional") return PanelMode::cross_sectional;
  if (s == "longitudinal") return PanelMode::longitudinal;
  throw ConfigError("unknown mode '" + s + "' (expected cross_sectional or longitudinal)");
}

PanelMode detect_mode(const PanelDataset& train, const PanelDataset& test) {
  const std::set<std::string> a(train.groups().begin(), train.groups().end());
  const std::set<std::string> b(test.groups().begin(), test.groups().end());
  if (a == b && test.time_origin() == train.time_label(train.n_times())) {
    return PanelMode::longitudinal;
  }
  const bool disjoint = std::none_of(b.begin(), b.end(), [&](const auto& g) { return a.contains(g); });
  if (disjoint && test.time_origin() == train.time_origin() && test.n_times() == train.n_times()) {
    return PanelMode::cross_sectional;
  }
  throw ArgumentError("train/test panels are neither a group split nor a time split");
}

std::string to_string(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::split: return "split";
    case BaselineMethod::cqr: return "cqr";
    case BaselineMethod::spci_per_group: return "spci_per_group";
  }
  return "?";
}

BaselineMethod baseline_method_from_string(const std::string& s) {
  if (s == "split") return BaselineMethod::split;
  if (s == "cqr") return BaselineMethod::cqr;
  if (s == "spci_per_group") return BaselineMethod::spci_per_group;
  throw ConfigError("unknown baseline method '" + s + "'");
}

void BaselineConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0)) {
    throw ConfigError("calibration_fraction must be in (0, 1)");
  }
  if (!(calibration_time_fraction > 0.0 && calibration_time_fraction < 1.0)) {
    throw ConfigError("calibration_time_fraction must be in (0, 1)");
  }
  if (n_lags == 0) throw ConfigError("n_lags must be >= 1");
  if (forest.n_trees == 0) throw ConfigError("forest needs trees");
}

void to_json(nlohmann::json& j, const BaselineConfig& c) {
  j = nlohmann::json{{"method", to_string(c.method)},
                     {"alpha", c.alpha},
                     {"calibration_fraction", c.calibration_fraction},
                     {"calibration_time_fraction", c.calibration_time_fraction},
                     {"n_lags", c.n_lags},
                     {"include_group_feature", c.include_group_feature},
                     {"forest", c.forest},
                     {"spci", c.spci},
                     {"jobs", c.jobs},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, BaselineConfig& c) {
  BaselineConfig d;
  c.method = baseline_method_from_string(j.value("method", to_string(d.method)));
  c.alpha = j.value("alpha", d.alpha);
  c.calibration_fraction = j.value("calibration_fraction", d.calibration_fraction);
  c.calibration_time_fraction = j.value("calibration_time_fraction", d.calibration_time_fraction);
  c.n_lags = j.value("n_lags", d.n_lags);
  c.include_group_feature = j.value("include_group_feature", d.include_group_feature);
  c.forest = d.forest;
  if (j.contains("forest")) merge_json(j.at("forest"), c.forest);
  c.spci = j.value("spci", d.spci);
  c.jobs = j.value("jobs", d.jobs);
  c.seed = j.value("seed", d.seed);
}

std::size_t conformal_rank(std::size_t n, double alpha) {
  // The small slack keeps products like 10 * 0.9 from rounding up to 10.
  const double r = std::ceil(static_cast<double>(n + 1) * (1.0 - alpha) - 1e-9);
  return static_cast<std::size_t>(std::max(1.0, r));
}

double conformal_quantile(std::vector<double> scores, double alpha) {
  if (scores.empty()) throw ArgumentError("no calibration scores");
  const std::size_t k = std::min(conformal_rank(scores.size(), alpha), scores.size());
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k - 1), scores.end());
  return scores[k - 1];
}

namespace {

struct Rows {
  std::size_t n_features = 0;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::string> group;
  std::vector<std::int64_t> time;

  void add(const SupervisedPanel& sp, std::size_t r, const PanelDataset& src) {
    auto row = sp.row(r);
    x.insert(x.end(), row.begin(), row.end());
    y.push_back(sp.targets[r]);
    group.push_back(src.groups()[sp.group_index[r]]);
    time.push_back(src.time_label(sp.time_index[r]));
  }
  std::size_t size() const { return y.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * n_features, n_features}; }
  MatrixView view() const { return {x, n_features}; }
};

struct Prepared {
  Rows proper;
  Rows calibration;
  Rows test;
};

Prepared prepare(const PanelDataset& train, const PanelDataset& test, const BaselineConfig& config) {
  config.validate();
  const PanelMode mode = detect_mode(train, test);
  const SupervisedOptions options{config.n_lags, config.include_group_feature};

  // Cross-sectional calibration groups are coded after the proper-training
  // groups, like the test groups, so both sit outside the code range the
  // forest was fit on and their scores stay exchangeable.
  std::vector<bool> cal_group(train.n_groups(), false);
  std::vector<std::string> proper_names;
  std::vector<std::string> cal_names;
  if (mode == PanelMode::cross_sectional) {
    const auto n_cal = static_cast<std::size_t>(
        std::llround(config.calibration_fraction * static_cast<double>(train.n_groups())));
    if (n_cal == 0 || n_cal >= train.n_groups()) {
      throw ConfigError("calibration split of " + std::to_string(train.n_groups()) +
                        " groups leaves an empty side");
    }
    std::vector<std::size_t> order(train.n_groups());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, "calibration"));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_cal; ++i) cal_group[order[i]] = true;
    for (std::size_t g = 0; g < train.n_groups(); ++g) {
      (cal_group[g] ? cal_names : proper_names).push_back(train.groups()[g]);
    }
  } else {
    proper_names = train.groups();
  }
  GroupEncoder encoder(proper_names);
  encoder.extend(cal_names);
  const SupervisedPanel sp = make_supervised(train, encoder, options);

  std::vector<bool> is_cal(sp.n_rows(), false);
  if (mode == PanelMode::cross_sectional) {
    for (std::size_t r = 0; r < sp.n_rows(); ++r) is_cal[r] = cal_group[sp.group_index[r]];
  } else {
    const std::size_t rows_per_group = train.n_times() - std::min(train.n_times(), config.n_lags);
    const auto n_cal = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(config.calibration_time_fraction *
                                                 static_cast<double>(train.n_times()))));
    if (n_cal >= rows_per_group) {
      throw ConfigError("calibration split of " + std::to_string(train.n_times()) +
                        " times leaves no proper-training rows");
    }
    const std::size_t first_cal = train.n_times() - n_cal;
    for (std::size_t r = 0; r < sp.n_rows(); ++r) is_cal[r] = sp.time_index[r] >= first_cal;
  }

  Prepared p;
  p.proper.n_features = p.calibration.n_features = p.test.n_features = sp.n_features;
  for (std::size_t r = 0; r < sp.n_rows(); ++r) {
    (is_cal[r] ? p.calibration : p.proper).add(sp, r, train);
  }
  if (p.calibration.size() == 0) throw ConfigError("calibration set is empty");

  if (mode == PanelMode::cross_sectional) {
    encoder.extend(test.groups());
    const SupervisedPanel tp = make_supervised(test, encoder, options);
    for (std::size_t r = 0; r < tp.n_rows(); ++r) p.test.add(tp, r, test);
  } else {
    const PanelDataset joined = concat_times(train, test);
    const SupervisedPanel tp = make_supervised(joined, encoder, options);
    for (std::size_t r = 0; r < tp.n_rows(); ++r) {
      if (tp.time_index[r] >= train.n_times()) p.test.add(tp, r, joined);
    }
  }
  return p;
}

void sort_records(std::vector<IntervalRecord>& records) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.time, a.group) < std::tie(b.time, b.group);
  });
}

IntervalRecord make_record(const Rows& rows, std::size_t i, double pred, double lower, double upper) {
  IntervalRecord r;
  r.group = rows.group[i];
  r.time = rows.time[i];
  r.y_pred = pred;
  r.lower = lower;
  r.upper = upper;
  r.beta = 0.0;
  reveal(r, rows.y[i]);
  return r;
}

}  // namespace

std::vector<IntervalRecord> split_conformal(const PanelDataset& train, const PanelDataset& test,
                                            const BaselineConfig& config) {
  const Prepared p = prepare(train, test, config);
  ForestParams params = config.forest;
  params.seed = derive_seed(config.seed, "split");
  const QuantileForest forest = QuantileForest::fit(p.proper.view(), p.proper.y, params);

  std::vector<double> scores(p.calibration.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = std::abs(p.calibration.y[i] - forest.predict_mean(p.calibration.row(i)));
  }
  const double q = conformal_quantile(std::move(scores), config.alpha);

  std::vector<IntervalRecord> out;
  out.reserve(p.test.size());
  for (std::size_t i = 0; i < p.test.size(); ++i) {
    const double pred = forest.predict_mean(p.test.row(i));
    out.push_back(make_record(p.test, i, pred, pred - q, pred + q));
  }
  sort_records(out);
  return out;
}

std::vector<IntervalRecord> cqr(const PanelDataset& train, const PanelDataset& test,
                                const BaselineConfig& config) {
  const Prepared p = prepare(train, test, config);
  ForestParams params = config.forest;
  params.seed = derive_seed(config.seed, "cqr");
  const QuantileForest forest = QuantileForest::fit(p.proper.view(), p.proper.y, params);
  const double lo_p = config.alpha / 2.0;
  const double hi_p = 1.0 - config.alpha / 2.0;

  std::vector<double> scores(p.calibration.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto dist = forest.distribution(p.calibration.row(i));
    const double y = p.calibration.y[i];
    scores[i] = std::max(dist.quantile(lo_p) - y, y - dist.quantile(hi_p));
  }
  const double q = conformal_quantile(std::move(scores), config.alpha);

  std::vector<IntervalRecord> out;
  out.reserve(p.test.size());
  for (std::size_t i = 0; i < p.test.size(); ++i) {
    const auto x = p.test.row(i);
    const auto dist = forest.distribution(x);
    double lower = dist.quantile(lo_p) - q;
    double upper = dist.quantile(hi_p) + q;
    if (lower > upper) lower = upper = 0.5 * (lower + upper);
    out.push_back(make_record(p.test, i, forest.predict_mean(x), lower, upper));
  }
  sort_records(out);
  return out;
}

LpciConfig spci_group_config(const BaselineConfig& config, std::size_t t_train,
                             std::size_t group_index) {
  LpciConfig c = config.spci;
  c.alpha = config.alpha;
  c.include_group_feature = false;
  c.fold_by = FoldStrategy::time;
  c.window = std::max<std::size_t>(1, std::min(c.window, t_train / 2));
  c.seed = derive_seed(config.seed, "spci", group_index);
  return c;
}

std::vector<IntervalRecord> spci_per_group(const PanelDataset& train, const PanelDataset& test,
                                           const BaselineConfig& config) {
  config.validate();
  if (detect_mode(train, test) != PanelMode::longitudinal) {
    throw ModeError("per-group SPCI needs a longitudinal split (same groups in train and test)");
  }
  const std::size_t n = train.n_groups();
  std::vector<std::vector<IntervalRecord>> per_group(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t g = next++; g < n; g = next++) {
      try {
        const std::size_t idx[] = {g};
        const PanelDataset tr = train.select_groups(idx);
        const std::size_t test_idx[] = {*test.group_index(train.groups()[g])};
        const PanelDataset te = test.select_groups(test_idx);
        LpciModel model = LpciModel::fit(tr, spci_group_config(config, tr.n_times(), g));
        per_group[g] = model.run_longitudinal(te);
      } catch (...) {
        errors[g] = std::current_exception();
      }
    }
  };
  std::size_t jobs = config.jobs ? config.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < jobs; ++i) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<IntervalRecord> out;
  for (auto& recs : per_group) out.insert(out.end(), recs.begin(), recs.end());
  sort_records(out);
  return out;
}

std::vector<IntervalRecord> run_baseline(const PanelDataset& train, const PanelDataset& test,
                                         const BaselineConfig& config) {
  switch (config.method) {
    case BaselineMethod::split: return split_conformal(train, test, config);
    case BaselineMethod::cqr: return cqr(train, test, config);
    case BaselineMethod::spci_per_group: return spci_per_group(train, test, config);
  }
  throw ConfigError("unknown baseline method");
}

}  // namespace lpci
