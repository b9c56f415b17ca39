#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace lpci {

/// Elementwise truth - prediction.
std::vector<double> compute_residuals(std::span<const double> truth, std::span<const double> preds);

/// mean_k = k^{-1} * sum_{i<=k} gamma^{k-i} * r_i for every prefix length k.
std::vector<double> ew_mean_series(std::span<const double> residuals, double gamma);

/// QRF design matrix. Each row is (mean_{n-1}, ..., mean_{n-w}[, group code])
/// with target r_n, where n is a 1-based position in a group's history.
struct TrainingMatrix {
  std::size_t n_features = 0;
  std::vector<double> features;
  std::vector<double> targets;

  std::size_t n_rows() const { return targets.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * n_features, n_features};
  }
  friend bool operator==(const TrainingMatrix&, const TrainingMatrix&) = default;
};

struct GroupHistory {
  int code = 0;
  std::vector<double> raw;
  std::vector<double> ew;
  std::size_t n_dummy = 0;
  double decayed_sum = 0.0;  // sum_i gamma^{k-i} r_i for the current k
  TrainingMatrix rows;
};

/// Per-group residual histories with incrementally maintained EW means and
/// QRF rows. A row for position n exists once n > window.
class ResidualState {
public:
  ResidualState(std::size_t window, double gamma, bool include_group_code = true);

  void register_group(const std::string& group, int code);
  bool has_group(const std::string& group) const { return groups_.contains(group); }

  void append(const std::string& group, double residual);
  /// Seeds `count` zero residuals for a group with no history.
  void seed_dummy(const std::string& group, std::size_t count);

  const GroupHistory& history(const std::string& group) const;
  std::vector<std::string> groups_by_code() const;

  /// Latest window (mean_n, ..., mean_{n-w+1}[, code]) used to predict
  /// position n + 1. Needs n >= window.
  std::vector<double> feature_window(const std::string& group) const;

  /// Concatenation of the incrementally built rows, groups in code order.
  TrainingMatrix training_matrix() const;
  std::size_t n_rows() const;
  std::size_t n_features() const { return window_ + (include_group_code_ ? 1 : 0); }

  std::size_t window() const { return window_; }
  double gamma() const { return gamma_; }
  bool include_group_code() const { return include_group_code_; }

  nlohmann::json to_json() const;
  static ResidualState from_json(const nlohmann::json& j);

private:
  GroupHistory& mutable_history(const std::string& group);
  void push(GroupHistory& h, double residual);

  std::size_t window_;
  double gamma_;
  bool include_group_code_;
  std::map<std::string, GroupHistory> groups_;
};

/// Rebuilds the QRF matrix for `groups` from raw residual series, recomputing
/// every EW mean from scratch. Row order: the given groups in code order, then
/// time ascending. Throws if a group has at most `window` residuals.
TrainingMatrix build_training_matrix(const ResidualState& state,
                                     std::span<const std::string> groups);

}  // namespace lpci
