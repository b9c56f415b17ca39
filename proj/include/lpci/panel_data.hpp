#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lpci {

/// Balanced panel: one target value (and an optional exogenous vector) for
/// every (group, time) pair. Groups are kept in sorted order and times are
/// normalized to 0..T-1; `time_origin` maps index 0 back to the original
/// integer timestamp.
class PanelDataset {
public:
  PanelDataset() = default;

  /// `target` is group-major (`g * n_times + t`); `exog` is laid out the same
  /// way with `exog_names.size()` values per cell. Throws on malformed input.
  PanelDataset(std::vector<std::string> groups, std::int64_t time_origin, std::size_t n_times,
               std::vector<double> target, std::vector<std::string> exog_names = {},
               std::vector<double> exog = {}, std::string target_name = "y");

  std::size_t n_groups() const { return groups_.size(); }
  std::size_t n_times() const { return n_times_; }
  std::size_t n_exog() const { return exog_names_.size(); }
  std::int64_t time_origin() const { return time_origin_; }
  std::int64_t time_label(std::size_t t) const { return time_origin_ + static_cast<std::int64_t>(t); }

  const std::vector<std::string>& groups() const { return groups_; }
  const std::vector<std::string>& exog_names() const { return exog_names_; }
  const std::string& target_name() const { return target_name_; }
  std::optional<std::size_t> group_index(const std::string& name) const;

  double y(std::size_t g, std::size_t t) const { return target_[g * n_times_ + t]; }
  std::span<const double> series(std::size_t g) const {
    return {target_.data() + g * n_times_, n_times_};
  }
  std::span<const double> exog(std::size_t g, std::size_t t) const {
    return {exog_.data() + (g * n_times_ + t) * n_exog(), n_exog()};
  }
  const std::vector<double>& target_values() const { return target_; }
  const std::vector<double>& exog_values() const { return exog_; }

  /// Sub-panel over the given group indices (kept in sorted order).
  PanelDataset select_groups(std::span<const std::size_t> indices) const;
  /// Sub-panel over time indices [begin, end).
  PanelDataset slice_times(std::size_t begin, std::size_t end) const;

  friend bool operator==(const PanelDataset&, const PanelDataset&) = default;

private:
  std::vector<std::string> groups_;
  std::int64_t time_origin_ = 0;
  std::size_t n_times_ = 0;
  std::vector<double> target_;
  std::vector<std::string> exog_names_;
  std::vector<double> exog_;
  std::string target_name_ = "y";
};

/// Joins two panels with identical groups along the time axis; `later` must
/// start right after `earlier` ends.
PanelDataset concat_times(const PanelDataset& earlier, const PanelDataset& later);

struct CsvSchema {
  std::string group = "group";
  std::string time = "time";
  std::string target = "y";
  friend bool operator==(const CsvSchema&, const CsvSchema&) = default;
};

/// Reads a comma-separated panel. Columns other than group/time/target are
/// taken as numeric exogenous features in header order.
PanelDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void write_csv(const PanelDataset& d, const std::filesystem::path& path);

/// Splits a CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

/// Groups are drawn into the test split uniformly at random; the test size is
/// round(test_fraction * |G|).
std::pair<PanelDataset, PanelDataset> split_cross_sectional(const PanelDataset& d,
                                                            double test_fraction,
                                                            std::uint64_t seed);

/// Train keeps original times <= split_time, test keeps the rest.
std::pair<PanelDataset, PanelDataset> split_longitudinal(const PanelDataset& d,
                                                         std::int64_t split_time);

struct ScalerParams {
  double mean = 0.0;
  double std = 1.0;

  double apply(double x) const { return (x - mean) / std; }
  double invert(double z) const { return z * std + mean; }
  friend bool operator==(const ScalerParams&, const ScalerParams&) = default;
};

/// Fitted standardization for one column. `per_group` is empty in the default
/// pooled mode.
struct ColumnScaler {
  std::string column;
  ScalerParams global;
  std::map<std::string, ScalerParams> per_group;

  const ScalerParams& params_for(const std::string& group) const;
};

using PanelScaler = std::vector<ColumnScaler>;

/// Population mean/std over every (group, time) cell of each named column
/// (the target name or an exogenous name). A column with fewer than two
/// distinct values throws DegenerateScaleError.
PanelScaler fit_scaler(const PanelDataset& train, std::span<const std::string> columns,
                       bool per_group = false);
PanelDataset apply_scaler(const PanelDataset& d, const PanelScaler& scaler);
PanelDataset invert_scaler(const PanelDataset& d, const PanelScaler& scaler);
const ColumnScaler* find_column(const PanelScaler& scaler, const std::string& column);

/// Label encoding of group identifiers: sorted train groups get 0..n-1, later
/// groups are appended after them in sorted order.
class GroupEncoder {
public:
  GroupEncoder() = default;
  explicit GroupEncoder(std::span<const std::string> groups);

  /// Registers any unseen groups; returns how many were added.
  std::size_t extend(std::span<const std::string> groups);
  int code(const std::string& group) const;
  bool contains(const std::string& group) const { return codes_.contains(group); }
  std::size_t size() const { return codes_.size(); }
  const std::map<std::string, int>& codes() const { return codes_; }

private:
  std::map<std::string, int> codes_;
};

struct SupervisedOptions {
  std::size_t n_lags = 1;
  bool include_group_code = true;
};

/// Row-major design matrix built from a panel. Feature layout per row:
/// [group code], Y_{t-1}, ..., Y_{t-n_lags}, exogenous_t...
struct SupervisedPanel {
  std::size_t n_features = 0;
  std::vector<double> features;
  std::vector<double> targets;
  std::vector<std::size_t> group_index;
  std::vector<int> group_code;
  std::vector<std::size_t> time_index;

  std::size_t n_rows() const { return targets.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * n_features, n_features};
  }
};

/// One row per (group, t) with t >= n_lags; rows are group-major, time
/// ascending.
SupervisedPanel make_supervised(const PanelDataset& d, const GroupEncoder& encoder,
                                const SupervisedOptions& options = {});

}  // namespace lpci
