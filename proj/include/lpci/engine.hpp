#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpci/forest.hpp"
#include "lpci/panel_data.hpp"
#include "lpci/records.hpp"
#include "lpci/residuals.hpp"

namespace lpci {

/// How the point-predictor ensemble assigns rows to folds. `groups` keeps
/// every group inside one fold; `time` uses contiguous time blocks (needed
/// when there is a single series).
enum class FoldStrategy { groups, time };

struct LpciConfig {
  double alpha = 0.1;
  std::size_t window = 20;
  double gamma = 0.9;
  std::size_t beta_grid_size = 20;
  std::size_t retrain_every = 1;
  std::size_t folds = 5;
  FoldStrategy fold_by = FoldStrategy::groups;
  /// Adds the label-encoded group to both the point and the residual features.
  bool include_group_feature = true;
  std::size_t n_lags = 1;
  /// Score each training row with the fold member that did not see it; when
  /// false the full ensemble scores its own training rows.
  bool out_of_fold_residuals = true;
  ForestParams point_forest;
  /// Larger leaves than the generic forest default: the residual features are
  /// noisy and small leaves give overconfident tail quantiles.
  ForestParams qrf{.min_leaf_size = 20};
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const LpciConfig&, const LpciConfig&) = default;
};

void to_json(nlohmann::json& j, const LpciConfig& c);
void from_json(const nlohmann::json& j, LpciConfig& c);

struct BetaChoice {
  double beta = 0.0;
  double lower = 0.0;  // Q(beta)
  double upper = 0.0;  // Q(1 - alpha + beta)
};

/// Scans p over the uniform grid {0, alpha/(n-1), ..., alpha} and keeps the
/// p with the narrowest Q(1 - alpha + p) - Q(p); ties go to the smallest p.
BetaChoice optimize_beta(const std::function<double(double)>& quantile_fn, double alpha,
                         std::size_t grid_size);

/// Residual offsets [Q(beta), Q(1 - alpha + beta)] from a conditional
/// distribution, with beta chosen by optimize_beta.
BetaChoice residual_interval(const ConditionalDistribution& dist, double alpha,
                             std::size_t grid_size);

struct Observation {
  double y = 0.0;
  std::vector<double> exog;
};

/// Mean of fold-wise forests.
struct PointEnsemble {
  std::vector<QuantileForest> members;

  double predict(std::span<const double> features) const;
};

/// LPCI model: point ensemble, residual state and the residual quantile
/// forest. Values are handled in standardized target units internally and
/// reported in original units.
class LpciModel {
public:
  static LpciModel fit(const PanelDataset& train, const LpciConfig& config);

  /// Rebuilds a model from its training panel and a checkpoint() document.
  static LpciModel restore(const PanelDataset& train, const nlohmann::json& checkpoint);

  /// Interval for an active group at `time`; y_true is NaN until revealed.
  IntervalRecord predict_interval(const std::string& group, std::int64_t time,
                                  std::span<const double> exog = {}) const;

  /// Predicts every active group at `time`, then absorbs the observed truths
  /// and refits the residual forest on schedule.
  std::vector<IntervalRecord> step(std::int64_t time,
                                   const std::map<std::string, Observation>& observations);

  /// Unseen groups over the training time range; each is seeded with
  /// `window` zero residuals.
  std::vector<IntervalRecord> run_cross_sectional(const PanelDataset& test);
  /// Training groups at the times that follow the training period.
  std::vector<IntervalRecord> run_longitudinal(const PanelDataset& test);

  const LpciConfig& config() const { return config_; }
  const ResidualState& residuals() const { return state_; }
  const QuantileForest& qrf() const { return qrf_; }
  const PointEnsemble& point_model() const { return ensemble_; }
  const GroupEncoder& encoder() const { return encoder_; }
  const ScalerParams& target_scaler() const { return target_scale_; }
  std::size_t qrf_fits() const { return qrf_fits_; }
  const std::set<std::string>& active_groups() const { return active_; }

  nlohmann::json checkpoint() const;

private:
  void refit_qrf();
  std::vector<double> point_features(const std::string& group, std::span<const double> exog) const;
  double predict_point_std(const std::string& group, std::span<const double> exog) const;
  void absorb(const std::string& group, double y_original);

  LpciConfig config_;
  GroupEncoder encoder_;
  ScalerParams target_scale_;
  std::size_t n_exog_ = 0;
  PointEnsemble ensemble_;
  ResidualState state_{1, 1.0};
  QuantileForest qrf_;
  std::map<std::string, std::deque<double>> lags_;  // scaled, most recent first
  std::set<std::string> active_;
  std::set<std::string> train_groups_;
  std::int64_t train_time_origin_ = 0;
  std::size_t train_n_times_ = 0;
  std::int64_t next_time_ = 0;
  std::size_t steps_ = 0;
  std::size_t qrf_fits_ = 0;
};

}  // namespace lpci
