#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "lpci/rng.hpp"

namespace lpci {

/// Read-only row-major matrix view.
struct MatrixView {
  std::span<const double> data;
  std::size_t cols = 0;

  std::size_t rows() const { return cols == 0 ? 0 : data.size() / cols; }
  std::span<const double> row(std::size_t i) const { return data.subspan(i * cols, cols); }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t min_leaf_size = 5;
  /// Features tried per split; 0 means all features when d <= 3, else ceil(d/3).
  std::size_t max_features = 0;
  bool bootstrap = true;
  /// 0 means unlimited depth.
  std::size_t max_depth = 0;
  std::uint64_t seed = 0;
  /// Worker threads for tree fitting; 0 picks hardware concurrency.
  std::size_t n_threads = 0;

  std::size_t features_per_split(std::size_t n_features) const;
  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

void to_json(nlohmann::json& j, const ForestParams& p);
void from_json(const nlohmann::json& j, ForestParams& p);
/// Overwrites only the fields present in `j`.
void merge_json(const nlohmann::json& j, ForestParams& p);

/// CART regression tree. Leaves keep the training indices that reached them
/// (with bootstrap multiplicity), sorted ascending.
class RegressionTree {
public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t leaf = -1;
  };

  /// Grows a tree on `samples` (indices into x/y, repeats allowed). A node is
  /// split greedily by squared-error reduction unless it holds fewer than
  /// 2 * min_leaf_size samples or has zero target variance.
  static RegressionTree fit(MatrixView x, std::span<const double> y,
                            std::span<const std::size_t> samples, const ForestParams& params,
                            Rng& rng);

  std::size_t leaf_of(std::span<const double> x) const;
  std::span<const std::size_t> leaf_samples(std::size_t leaf) const;
  double leaf_mean(std::size_t leaf) const { return leaf_means_[leaf]; }
  double predict(std::span<const double> x) const { return leaf_means_[leaf_of(x)]; }

  std::size_t n_leaves() const { return leaf_means_.size(); }
  std::size_t n_features() const { return n_features_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// Same structure, leaf means recomputed for new training targets.
  void retarget(std::span<const double> y);

  /// Threshold chain on feature 0: leaf k holds x0 in (cuts[k-1], cuts[k]].
  /// `leaves[k]` lists the training indices assigned to leaf k. Used to pin
  /// down exact leaf layouts in tests and tools.
  static RegressionTree from_leaves(std::span<const double> cuts,
                                    std::vector<std::vector<std::size_t>> leaves,
                                    std::span<const double> y, std::size_t n_features);

  friend bool operator==(const RegressionTree&, const RegressionTree&);

private:
  std::vector<Node> nodes_;
  std::vector<std::size_t> leaf_offsets_;  // size n_leaves + 1
  std::vector<std::size_t> leaf_indices_;
  std::vector<double> leaf_means_;
  std::size_t n_features_ = 0;
};

bool operator==(const RegressionTree::Node& a, const RegressionTree::Node& b);

/// Fits one tree on all rows (no bootstrap).
RegressionTree fit_tree(MatrixView x, std::span<const double> y, const ForestParams& params,
                        Rng& rng);

/// Sparse quantile-forest weights over training indices, ascending by index.
struct WeightVector {
  std::vector<std::size_t> indices;
  std::vector<double> weights;

  double sum() const;
  double weight_of(std::size_t index) const;
};

/// Weighted empirical distribution of training targets at one query point:
/// F(z) = sum_i w_i 1(y_i <= z). Sums always run in training-index order so
/// repeated evaluations are bit-for-bit reproducible.
class ConditionalDistribution {
public:
  ConditionalDistribution(WeightVector weights, std::span<const double> targets);

  double cdf(double z) const;
  /// inf{z : F(z) >= p} over the step function, p in (0, 1).
  double quantile(double p) const;
  /// Closed-range variant used for interval construction: p <= 0 gives the
  /// smallest supported target, and levels the rounded total weight cannot
  /// reach give the largest.
  double quantile_closed(double p) const;

  const WeightVector& weights() const { return weights_; }
  double min_target() const { return support_.front(); }
  double max_target() const { return support_.back(); }

private:
  WeightVector weights_;
  std::vector<double> support_targets_;  // parallel to weights_.indices
  std::vector<double> support_;          // sorted unique targets with positive weight
};

class QuantileForest {
public:
  static QuantileForest fit(MatrixView x, std::span<const double> y, const ForestParams& params);

  double predict_mean(std::span<const double> x) const;
  WeightVector leaf_weights(std::span<const double> x) const;
  ConditionalDistribution distribution(std::span<const double> x) const;
  double conditional_cdf(std::span<const double> x, double z) const;
  double quantile(std::span<const double> x, double p) const;

  /// Copy with identical tree structure but different training targets.
  QuantileForest with_targets(std::vector<double> targets) const;

  std::size_t n_trees() const { return trees_.size(); }
  std::size_t n_features() const { return n_features_; }
  std::size_t n_samples() const { return targets_.size(); }
  const std::vector<RegressionTree>& trees() const { return trees_; }
  const std::vector<double>& targets() const { return targets_; }
  const ForestParams& params() const { return params_; }

  static QuantileForest from_trees(std::vector<RegressionTree> trees, std::vector<double> targets,
                                   std::size_t n_features);

private:
  void check_dims(std::span<const double> x) const;

  std::vector<RegressionTree> trees_;
  std::vector<double> targets_;
  std::size_t n_features_ = 0;
  ForestParams params_;
};

}  // namespace lpci
