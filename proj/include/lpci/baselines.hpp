#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpci/engine.hpp"
#include "lpci/forest.hpp"
#include "lpci/panel_data.hpp"
#include "lpci/records.hpp"

namespace lpci {

enum class PanelMode { cross_sectional, longitudinal };

std::string to_string(PanelMode mode);
PanelMode panel_mode_from_string(const std::string& s);

/// Cross-sectional when the group sets are disjoint and the time ranges
/// match; longitudinal when the groups match and `test` starts right after
/// `train`. Anything else throws ArgumentError.
PanelMode detect_mode(const PanelDataset& train, const PanelDataset& test);

enum class BaselineMethod { split, cqr, spci_per_group };

std::string to_string(BaselineMethod method);
BaselineMethod baseline_method_from_string(const std::string& s);

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::split;
  double alpha = 0.1;
  /// Share of training groups held out for calibration (cross-sectional).
  double calibration_fraction = 0.5;
  /// Share of training times held out for calibration (longitudinal).
  double calibration_time_fraction = 0.25;
  std::size_t n_lags = 1;
  bool include_group_feature = true;
  ForestParams forest;
  /// Engine settings for the per-group SPCI runs.
  LpciConfig spci;
  /// Worker threads for per-group SPCI; 0 picks the hardware count.
  std::size_t jobs = 0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const BaselineConfig&, const BaselineConfig&) = default;
};

void to_json(nlohmann::json& j, const BaselineConfig& c);
void from_json(const nlohmann::json& j, BaselineConfig& c);

/// 1-based rank ceil((n + 1)(1 - alpha)) of the conformal correction.
std::size_t conformal_rank(std::size_t n, double alpha);

/// The conformal_rank-th smallest score. A rank beyond n (tiny calibration
/// sets) falls back to the largest score so the interval stays finite.
double conformal_quantile(std::vector<double> scores, double alpha);

std::vector<IntervalRecord> split_conformal(const PanelDataset& train, const PanelDataset& test,
                                            const BaselineConfig& config);
std::vector<IntervalRecord> cqr(const PanelDataset& train, const PanelDataset& test,
                                const BaselineConfig& config);
std::vector<IntervalRecord> spci_per_group(const PanelDataset& train, const PanelDataset& test,
                                           const BaselineConfig& config);

/// Engine config used for the group at `group_index` by spci_per_group: no
/// group feature, time-block folds, window clamped to t_train / 2 and a
/// per-group seed.
LpciConfig spci_group_config(const BaselineConfig& config, std::size_t t_train,
                             std::size_t group_index);

std::vector<IntervalRecord> run_baseline(const PanelDataset& train, const PanelDataset& test,
                                         const BaselineConfig& config);

}  // namespace lpci
