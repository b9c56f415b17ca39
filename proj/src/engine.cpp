#include "lpci/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lpci/error.hpp"
#include "lpci/rng.hpp"

namespace lpci {

void LpciConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  if (window == 0) throw ConfigError("window must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0, 1]");
  if (beta_grid_size < 2) throw ConfigError("beta_grid_size must be >= 2");
  if (retrain_every == 0) throw ConfigError("retrain_every must be >= 1");
  if (folds == 0) throw ConfigError("folds must be >= 1");
  if (n_lags == 0) throw ConfigError("n_lags must be >= 1");
  if (point_forest.n_trees == 0 || qrf.n_trees == 0) throw ConfigError("forests need trees");
}

NLOHMANN_JSON_SERIALIZE_ENUM(FoldStrategy, {{FoldStrategy::groups, "groups"},
                                            {FoldStrategy::time, "time"}})

void to_json(nlohmann::json& j, const LpciConfig& c) {
  j = nlohmann::json{{"alpha", c.alpha},
                     {"window", c.window},
                     {"gamma", c.gamma},
                     {"beta_grid_size", c.beta_grid_size},
                     {"retrain_every", c.retrain_every},
                     {"folds", c.folds},
                     {"fold_by", c.fold_by},
                     {"include_group_feature", c.include_group_feature},
                     {"n_lags", c.n_lags},
                     {"out_of_fold_residuals", c.out_of_fold_residuals},
                     {"point_forest", c.point_forest},
                     {"qrf", c.qrf},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, LpciConfig& c) {
  LpciConfig d;
  c.alpha = j.value("alpha", d.alpha);
  c.window = j.value("window", d.window);
  c.gamma = j.value("gamma", d.gamma);
  c.beta_grid_size = j.value("beta_grid_size", d.beta_grid_size);
  c.retrain_every = j.value("retrain_every", d.retrain_every);
  c.folds = j.value("folds", d.folds);
  c.fold_by = j.value("fold_by", d.fold_by);
  c.include_group_feature = j.value("include_group_feature", d.include_group_feature);
  c.n_lags = j.value("n_lags", d.n_lags);
  c.out_of_fold_residuals = j.value("out_of_fold_residuals", d.out_of_fold_residuals);
  c.point_forest = d.point_forest;
  if (j.contains("point_forest")) merge_json(j.at("point_forest"), c.point_forest);
  c.qrf = d.qrf;
  if (j.contains("qrf")) merge_json(j.at("qrf"), c.qrf);
  c.seed = j.value("seed", d.seed);
}

BetaChoice optimize_beta(const std::function<double(double)>& quantile_fn, double alpha,
                         std::size_t grid_size) {
  if (grid_size < 2) throw ArgumentError("beta grid needs at least 2 points");
  BetaChoice best;
  double best_width = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < grid_size; ++j) {
    const double p = alpha * static_cast<double>(j) / static_cast<double>(grid_size - 1);
    const double lo = quantile_fn(p);
    const double hi = quantile_fn(1.0 - alpha + p);
    const double width = hi - lo;
    if (width < best_width) {
      best_width = width;
      best = {p, lo, hi};
    }
  }
  return best;
}

BetaChoice residual_interval(const ConditionalDistribution& dist, double alpha,
                             std::size_t grid_size) {
  return optimize_beta([&](double p) { return dist.quantile_closed(p); }, alpha, grid_size);
}

double PointEnsemble::predict(std::span<const double> features) const {
  if (members.empty()) throw StateError("point ensemble is empty");
  double s = 0.0;
  for (const auto& m : members) s += m.predict_mean(features);
  return s / static_cast<double>(members.size());
}

LpciModel LpciModel::fit(const PanelDataset& train, const LpciConfig& config) {
  config.validate();
  if (train.n_times() < config.n_lags + config.window + 1) {
    throw ConfigError("training panel has " + std::to_string(train.n_times()) +
                      " times; window " + std::to_string(config.window) + " plus " +
                      std::to_string(config.n_lags) + " lag(s) needs at least " +
                      std::to_string(config.n_lags + config.window + 1));
  }

  LpciModel m;
  m.config_ = config;
  m.encoder_ = GroupEncoder(train.groups());
  const std::vector<std::string> target_col{train.target_name()};
  m.target_scale_ = fit_scaler(train, target_col).front().global;
  m.n_exog_ = train.n_exog();
  m.train_groups_ = {train.groups().begin(), train.groups().end()};
  m.train_time_origin_ = train.time_origin();
  m.train_n_times_ = train.n_times();
  m.next_time_ = train.time_label(train.n_times());

  std::vector<double> scaled_y = train.target_values();
  for (double& v : scaled_y) v = m.target_scale_.apply(v);
  const PanelDataset scaled(train.groups(), train.time_origin(), train.n_times(),
                            std::move(scaled_y), train.exog_names(), train.exog_values(),
                            train.target_name());
  const SupervisedPanel sp = make_supervised(
      scaled, m.encoder_, {config.n_lags, config.include_group_feature});

  // Fold of every supervised row.
  const std::size_t folds = config.folds;
  std::vector<std::size_t> row_fold(sp.n_rows(), 0);
  if (folds > 1) {
    if (config.fold_by == FoldStrategy::groups) {
      if (train.n_groups() < folds) {
        throw ConfigError("need at least " + std::to_string(folds) + " groups for " +
                          std::to_string(folds) + " group folds, got " +
                          std::to_string(train.n_groups()));
      }
      std::vector<std::size_t> order(train.n_groups());
      std::iota(order.begin(), order.end(), 0);
      Rng rng(derive_seed(config.seed, "folds"));
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::size_t> group_fold(train.n_groups());
      for (std::size_t i = 0; i < order.size(); ++i) group_fold[order[i]] = i % folds;
      for (std::size_t r = 0; r < sp.n_rows(); ++r) row_fold[r] = group_fold[sp.group_index[r]];
    } else {
      const std::size_t per_group = train.n_times() - config.n_lags;
      if (per_group < folds) {
        throw ConfigError("need at least " + std::to_string(folds) + " rows per group for " +
                          std::to_string(folds) + " time folds");
      }
      for (std::size_t r = 0; r < sp.n_rows(); ++r) {
        row_fold[r] = (sp.time_index[r] - config.n_lags) * folds / per_group;
      }
    }
  }

  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t r = 0; r < sp.n_rows(); ++r) {
      if (folds > 1 && row_fold[r] == k) continue;
      auto row = sp.row(r);
      x.insert(x.end(), row.begin(), row.end());
      y.push_back(sp.targets[r]);
    }
    ForestParams params = config.point_forest;
    params.seed = derive_seed(config.seed, "point", k);
    params.min_leaf_size = std::min(params.min_leaf_size, y.size());
    m.ensemble_.members.push_back(QuantileForest::fit({x, sp.n_features}, y, params));
  }

  // Out-of-fold residuals: each row is scored by the member that never saw it.
  m.state_ = ResidualState(config.window, config.gamma, config.include_group_feature);
  for (const auto& g : train.groups()) m.state_.register_group(g, m.encoder_.code(g));
  for (std::size_t r = 0; r < sp.n_rows(); ++r) {
    const double pred = config.out_of_fold_residuals
                            ? m.ensemble_.members[row_fold[r]].predict_mean(sp.row(r))
                            : m.ensemble_.predict(sp.row(r));
    m.state_.append(train.groups()[sp.group_index[r]], sp.targets[r] - pred);
  }

  for (std::size_t g = 0; g < train.n_groups(); ++g) {
    auto& lags = m.lags_[train.groups()[g]];
    for (std::size_t lag = 1; lag <= config.n_lags; ++lag) {
      lags.push_back(scaled.y(g, train.n_times() - lag));
    }
  }
  m.active_ = m.train_groups_;
  m.refit_qrf();
  return m;
}

void LpciModel::refit_qrf() {
  const TrainingMatrix tm = state_.training_matrix();
  if (tm.n_rows() == 0) throw StateError("residual state has no training rows");
  ForestParams params = config_.qrf;
  params.seed = derive_seed(config_.seed, "qrf", qrf_fits_);
  // Short single-series histories may hold fewer rows than one leaf needs.
  params.min_leaf_size = std::min(params.min_leaf_size, tm.n_rows());
  qrf_ = QuantileForest::fit({tm.features, tm.n_features}, tm.targets, params);
  ++qrf_fits_;
}

std::vector<double> LpciModel::point_features(const std::string& group,
                                              std::span<const double> exog) const {
  auto it = lags_.find(group);
  if (it == lags_.end()) throw StateError("no lag context for group '" + group + "'");
  if (exog.size() != n_exog_) {
    throw ArgumentError("expected " + std::to_string(n_exog_) + " exogenous values, got " +
                        std::to_string(exog.size()));
  }
  std::vector<double> x;
  if (config_.include_group_feature) x.push_back(encoder_.code(group));
  x.insert(x.end(), it->second.begin(), it->second.end());
  x.insert(x.end(), exog.begin(), exog.end());
  return x;
}

double LpciModel::predict_point_std(const std::string& group, std::span<const double> exog) const {
  return ensemble_.predict(point_features(group, exog));
}

IntervalRecord LpciModel::predict_interval(const std::string& group, std::int64_t time,
                                           std::span<const double> exog) const {
  const double point = predict_point_std(group, exog);
  const auto window = state_.feature_window(group);
  const BetaChoice q =
      residual_interval(qrf_.distribution(window), config_.alpha, config_.beta_grid_size);
  IntervalRecord r;
  r.group = group;
  r.time = time;
  r.y_true = std::numeric_limits<double>::quiet_NaN();
  r.y_pred = target_scale_.invert(point);
  r.lower = target_scale_.invert(point + q.lower);
  r.upper = target_scale_.invert(point + q.upper);
  r.beta = q.beta;
  r.covered = false;
  return r;
}

void LpciModel::absorb(const std::string& group, double y_original) {
  auto& lags = lags_.at(group);
  lags.push_front(target_scale_.apply(y_original));
  lags.pop_back();
}

std::vector<IntervalRecord> LpciModel::step(
    std::int64_t time, const std::map<std::string, Observation>& observations) {
  for (const auto& g : active_) {
    if (!observations.contains(g)) {
      throw ArgumentError("missing observation for group '" + g + "' at time " +
                          std::to_string(time));
    }
  }
  for (const auto& [g, obs] : observations) {
    if (!active_.contains(g)) throw ArgumentError("observation for inactive group '" + g + "'");
  }

  std::vector<IntervalRecord> records;
  std::vector<double> points;
  records.reserve(active_.size());
  for (const auto& g : active_) {
    const auto& obs = observations.at(g);
    records.push_back(predict_interval(g, time, obs.exog));
    points.push_back(predict_point_std(g, obs.exog));
  }
  std::size_t i = 0;
  for (const auto& g : active_) {
    const double y = observations.at(g).y;
    reveal(records[i], y);
    state_.append(g, target_scale_.apply(y) - points[i]);
    absorb(g, y);
    ++i;
  }
  ++steps_;
  if (steps_ % config_.retrain_every == 0) refit_qrf();
  return records;
}

std::vector<IntervalRecord> LpciModel::run_cross_sectional(const PanelDataset& test) {
  for (const auto& g : test.groups()) {
    if (train_groups_.contains(g) || state_.has_group(g)) {
      throw ArgumentError("test group '" + g + "' is not new to the model");
    }
  }
  if (test.time_origin() != train_time_origin_ || test.n_times() != train_n_times_) {
    throw ArgumentError("cross-sectional test panel must cover the training time range");
  }
  if (test.n_exog() != n_exog_) throw ArgumentError("exogenous column count differs from training");

  encoder_.extend(test.groups());
  for (std::size_t g = 0; g < test.n_groups(); ++g) {
    const auto& name = test.groups()[g];
    state_.register_group(name, encoder_.code(name));
    state_.seed_dummy(name, config_.window);
    auto& lags = lags_[name];
    for (std::size_t lag = 1; lag <= config_.n_lags; ++lag) {
      lags.push_back(target_scale_.apply(test.y(g, config_.n_lags - lag)));
    }
  }
  active_ = {test.groups().begin(), test.groups().end()};

  std::vector<IntervalRecord> out;
  for (std::size_t t = config_.n_lags; t < test.n_times(); ++t) {
    std::map<std::string, Observation> obs;
    for (std::size_t g = 0; g < test.n_groups(); ++g) {
      auto e = test.exog(g, t);
      obs[test.groups()[g]] = Observation{test.y(g, t), {e.begin(), e.end()}};
    }
    auto recs = step(test.time_label(t), obs);
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

std::vector<IntervalRecord> LpciModel::run_longitudinal(const PanelDataset& test) {
  if (std::set<std::string>(test.groups().begin(), test.groups().end()) != train_groups_) {
    throw ArgumentError("longitudinal test panel must contain exactly the training groups");
  }
  if (test.time_origin() != next_time_) {
    throw ArgumentError("longitudinal test panel must start at time " + std::to_string(next_time_));
  }
  if (test.n_exog() != n_exog_) throw ArgumentError("exogenous column count differs from training");
  active_ = train_groups_;

  std::vector<IntervalRecord> out;
  for (std::size_t t = 0; t < test.n_times(); ++t) {
    std::map<std::string, Observation> obs;
    for (std::size_t g = 0; g < test.n_groups(); ++g) {
      auto e = test.exog(g, t);
      obs[test.groups()[g]] = Observation{test.y(g, t), {e.begin(), e.end()}};
    }
    auto recs = step(test.time_label(t), obs);
    out.insert(out.end(), recs.begin(), recs.end());
    next_time_ = test.time_label(t) + 1;
  }
  return out;
}

nlohmann::json LpciModel::checkpoint() const {
  nlohmann::json lags = nlohmann::json::object();
  for (const auto& [g, l] : lags_) lags[g] = std::vector<double>(l.begin(), l.end());
  return {{"config", config_},
          {"codes", encoder_.codes()},
          {"lags", lags},
          {"active", active_},
          {"next_time", next_time_},
          {"steps", steps_},
          {"qrf_fits", qrf_fits_},
          {"residuals", state_.to_json()}};
}

LpciModel LpciModel::restore(const PanelDataset& train, const nlohmann::json& checkpoint) {
  LpciModel m = fit(train, checkpoint.at("config").get<LpciConfig>());
  const auto codes = checkpoint.at("codes").get<std::map<std::string, int>>();
  std::vector<std::pair<int, std::string>> by_code;
  for (const auto& [g, c] : codes) by_code.emplace_back(c, g);
  std::sort(by_code.begin(), by_code.end());
  for (const auto& [c, g] : by_code) {
    const std::vector<std::string> one{g};
    m.encoder_.extend(one);
    if (m.encoder_.code(g) != c) throw StateError("checkpoint group codes are inconsistent");
  }
  m.lags_.clear();
  for (const auto& [g, l] : checkpoint.at("lags").items()) {
    const auto values = l.get<std::vector<double>>();
    m.lags_[g] = std::deque<double>(values.begin(), values.end());
  }
  m.active_ = checkpoint.at("active").get<std::set<std::string>>();
  m.next_time_ = checkpoint.at("next_time").get<std::int64_t>();
  m.steps_ = checkpoint.at("steps").get<std::size_t>();
  m.state_ = ResidualState::from_json(checkpoint.at("residuals"));
  const auto fits = checkpoint.at("qrf_fits").get<std::size_t>();
  if (fits == 0) throw StateError("checkpoint has no residual forest fits");
  m.qrf_fits_ = fits - 1;
  m.refit_qrf();
  return m;
}

}  // namespace lpci
