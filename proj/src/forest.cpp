#include "lpci/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "lpci/error.hpp"

namespace lpci {

std::size_t ForestParams::features_per_split(std::size_t n_features) const {
  if (max_features > 0) return std::min(max_features, n_features);
  if (n_features <= 3) return n_features;
  return (n_features + 2) / 3;
}

void to_json(nlohmann::json& j, const ForestParams& p) {
  j = nlohmann::json{{"n_trees", p.n_trees},     {"min_leaf_size", p.min_leaf_size},
                     {"max_features", p.max_features}, {"bootstrap", p.bootstrap},
                     {"max_depth", p.max_depth}, {"seed", p.seed},
                     {"n_threads", p.n_threads}};
}

void merge_json(const nlohmann::json& j, ForestParams& p) {
  p.n_trees = j.value("n_trees", p.n_trees);
  p.min_leaf_size = j.value("min_leaf_size", p.min_leaf_size);
  p.max_features = j.value("max_features", p.max_features);
  p.bootstrap = j.value("bootstrap", p.bootstrap);
  p.max_depth = j.value("max_depth", p.max_depth);
  p.seed = j.value("seed", p.seed);
  p.n_threads = j.value("n_threads", p.n_threads);
}

void from_json(const nlohmann::json& j, ForestParams& p) {
  p = ForestParams{};
  merge_json(j, p);
}

bool operator==(const RegressionTree::Node& a, const RegressionTree::Node& b) {
  return a.feature == b.feature && a.threshold == b.threshold && a.left == b.left &&
         a.right == b.right && a.leaf == b.leaf;
}

bool operator==(const RegressionTree& a, const RegressionTree& b) {
  return a.nodes_ == b.nodes_ && a.leaf_offsets_ == b.leaf_offsets_ &&
         a.leaf_indices_ == b.leaf_indices_ && a.leaf_means_ == b.leaf_means_ &&
         a.n_features_ == b.n_features_;
}

namespace {

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

}  // namespace

RegressionTree RegressionTree::fit(MatrixView x, std::span<const double> y,
                                   std::span<const std::size_t> samples,
                                   const ForestParams& params, Rng& rng) {
  if (samples.empty() || x.rows() == 0) throw ArgumentError("cannot fit a tree on no samples");
  if (y.size() != x.rows()) throw ArgumentError("samples and targets are not aligned");
  const std::size_t min_leaf = std::max<std::size_t>(1, params.min_leaf_size);
  if (samples.size() < min_leaf) throw ArgumentError("fewer samples than min_leaf_size");

  const std::size_t d = x.cols;
  const std::size_t mtry = params.features_per_split(d);

  RegressionTree tree;
  tree.n_features_ = d;
  tree.leaf_offsets_.push_back(0);

  std::vector<std::size_t> work(samples.begin(), samples.end());
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(work.size());
  std::vector<std::size_t> features(d);

  struct Task {
    std::size_t begin, end, depth;
    std::int32_t node;
  };
  std::vector<Task> stack;
  tree.nodes_.emplace_back();
  stack.push_back({0, work.size(), 0, 0});

  auto make_leaf = [&](const Task& task) {
    std::sort(work.begin() + static_cast<std::ptrdiff_t>(task.begin),
              work.begin() + static_cast<std::ptrdiff_t>(task.end));
    double sum = 0.0;
    for (std::size_t i = task.begin; i < task.end; ++i) {
      tree.leaf_indices_.push_back(work[i]);
      sum += y[work[i]];
    }
    tree.leaf_offsets_.push_back(tree.leaf_indices_.size());
    tree.leaf_means_.push_back(sum / static_cast<double>(task.end - task.begin));
    tree.nodes_[static_cast<std::size_t>(task.node)].leaf =
        static_cast<std::int32_t>(tree.leaf_means_.size() - 1);
  };

  while (!stack.empty()) {
    const Task task = stack.back();
    stack.pop_back();
    const std::size_t n = task.end - task.begin;

    double mean = 0.0;
    for (std::size_t i = task.begin; i < task.end; ++i) mean += y[work[i]];
    mean /= static_cast<double>(n);
    double sse = 0.0;
    for (std::size_t i = task.begin; i < task.end; ++i) {
      const double r = y[work[i]] - mean;
      sse += r * r;
    }
    if (n < 2 * min_leaf || !(sse > 0.0) ||
        (params.max_depth > 0 && task.depth >= params.max_depth)) {
      make_leaf(task);
      continue;
    }

    std::iota(features.begin(), features.end(), 0);
    if (mtry < d) {
      for (std::size_t i = 0; i < mtry; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, d - 1);
        std::swap(features[i], features[pick(rng)]);
      }
      std::sort(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(mtry));
    }

    SplitCandidate best;
    const double min_gain = sse * 1e-12;
    for (std::size_t fi = 0; fi < mtry; ++fi) {
      const std::size_t f = features[fi];
      pairs.clear();
      double total = 0.0;
      for (std::size_t i = task.begin; i < task.end; ++i) {
        const double r = y[work[i]] - mean;
        pairs.emplace_back(x(work[i], f), r);
        total += r;
      }
      std::sort(pairs.begin(), pairs.end());
      if (!(pairs.front().first < pairs.back().first)) continue;
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += pairs[i].second;
        const std::size_t nl = i + 1;
        const std::size_t nr = n - nl;
        if (nr < min_leaf) break;
        if (nl < min_leaf || !(pairs[i].first < pairs[i + 1].first)) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr);
        if (gain > best.gain && gain > min_gain) {
          double thr = 0.5 * (pairs[i].first + pairs[i + 1].first);
          if (!(thr < pairs[i + 1].first)) thr = pairs[i].first;
          best = {static_cast<int>(f), thr, gain};
        }
      }
    }
    if (best.feature < 0) {
      make_leaf(task);
      continue;
    }

    const auto f = static_cast<std::size_t>(best.feature);
    auto first = work.begin() + static_cast<std::ptrdiff_t>(task.begin);
    auto last = work.begin() + static_cast<std::ptrdiff_t>(task.end);
    auto mid_it = std::stable_partition(
        first, last, [&](std::size_t i) { return x(i, f) <= best.threshold; });
    const auto mid = static_cast<std::size_t>(mid_it - work.begin());

    const auto left = static_cast<std::int32_t>(tree.nodes_.size());
    tree.nodes_.emplace_back();
    const auto right = static_cast<std::int32_t>(tree.nodes_.size());
    tree.nodes_.emplace_back();
    Node& node = tree.nodes_[static_cast<std::size_t>(task.node)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    stack.push_back({mid, task.end, task.depth + 1, right});
    stack.push_back({task.begin, mid, task.depth + 1, left});
  }
  return tree;
}

std::size_t RegressionTree::leaf_of(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const Node& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                      : n.right);
  }
  return static_cast<std::size_t>(nodes_[i].leaf);
}

std::span<const std::size_t> RegressionTree::leaf_samples(std::size_t leaf) const {
  return std::span<const std::size_t>(leaf_indices_)
      .subspan(leaf_offsets_[leaf], leaf_offsets_[leaf + 1] - leaf_offsets_[leaf]);
}

void RegressionTree::retarget(std::span<const double> y) {
  for (std::size_t leaf = 0; leaf < leaf_means_.size(); ++leaf) {
    double sum = 0.0;
    auto s = leaf_samples(leaf);
    for (std::size_t i : s) sum += y[i];
    leaf_means_[leaf] = sum / static_cast<double>(s.size());
  }
}

RegressionTree fit_tree(MatrixView x, std::span<const double> y, const ForestParams& params,
                        Rng& rng) {
  std::vector<std::size_t> all(x.rows());
  std::iota(all.begin(), all.end(), 0);
  return RegressionTree::fit(x, y, all, params, rng);
}

RegressionTree RegressionTree::from_leaves(std::span<const double> cuts,
                                           std::vector<std::vector<std::size_t>> leaves,
                                           std::span<const double> y, std::size_t n_features) {
  if (leaves.size() != cuts.size() + 1) throw ArgumentError("need cuts.size() + 1 leaves");
  if (!std::is_sorted(cuts.begin(), cuts.end())) throw ArgumentError("cuts must be ascending");
  if (n_features == 0) throw ArgumentError("tree needs at least one feature");
  RegressionTree tree;
  tree.n_features_ = n_features;
  tree.leaf_offsets_.push_back(0);
  for (auto& leaf : leaves) {
    if (leaf.empty()) throw ArgumentError("leaves must be nonempty");
    std::sort(leaf.begin(), leaf.end());
    for (std::size_t i : leaf) {
      if (i >= y.size()) throw ArgumentError("leaf index out of range");
      tree.leaf_indices_.push_back(i);
    }
    tree.leaf_offsets_.push_back(tree.leaf_indices_.size());
    tree.leaf_means_.push_back(0.0);
  }
  // Node 2k tests cut k; its left child is leaf k, its right child continues.
  for (std::size_t k = 0; k < cuts.size(); ++k) {
    Node split;
    split.feature = 0;
    split.threshold = cuts[k];
    split.left = static_cast<std::int32_t>(tree.nodes_.size() + 1);
    split.right = static_cast<std::int32_t>(tree.nodes_.size() + 2);
    tree.nodes_.push_back(split);
    Node leaf;
    leaf.leaf = static_cast<std::int32_t>(k);
    tree.nodes_.push_back(leaf);
  }
  Node last;
  last.leaf = static_cast<std::int32_t>(cuts.size());
  tree.nodes_.push_back(last);
  tree.retarget(y);
  return tree;
}

double WeightVector::sum() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

double WeightVector::weight_of(std::size_t index) const {
  auto it = std::lower_bound(indices.begin(), indices.end(), index);
  if (it == indices.end() || *it != index) return 0.0;
  return weights[static_cast<std::size_t>(it - indices.begin())];
}

ConditionalDistribution::ConditionalDistribution(WeightVector weights,
                                                 std::span<const double> targets)
    : weights_(std::move(weights)) {
  if (weights_.indices.empty()) throw ArgumentError("empty weight vector");
  support_targets_.reserve(weights_.indices.size());
  for (std::size_t i : weights_.indices) {
    if (i >= targets.size()) throw ArgumentError("weight index out of range");
    support_targets_.push_back(targets[i]);
  }
  support_ = support_targets_;
  std::sort(support_.begin(), support_.end());
  support_.erase(std::unique(support_.begin(), support_.end()), support_.end());
}

double ConditionalDistribution::cdf(double z) const {
  double s = 0.0;
  for (std::size_t j = 0; j < support_targets_.size(); ++j) {
    if (support_targets_[j] <= z) s += weights_.weights[j];
  }
  return s;
}

double ConditionalDistribution::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw ArgumentError("quantile level must be in (0, 1)");
  return quantile_closed(p);
}

double ConditionalDistribution::quantile_closed(double p) const {
  if (p <= 0.0) return support_.front();
  std::size_t lo = 0;
  std::size_t hi = support_.size();  // answer index in [lo, hi]; hi means "none"
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (cdf(support_[mid]) >= p) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo < support_.size() ? support_[lo] : support_.back();
}

QuantileForest QuantileForest::fit(MatrixView x, std::span<const double> y,
                                   const ForestParams& params) {
  if (params.n_trees == 0) throw ArgumentError("forest needs at least one tree");
  if (x.rows() == 0) throw ArgumentError("cannot fit a forest on no samples");
  if (y.size() != x.rows()) throw ArgumentError("samples and targets are not aligned");
  QuantileForest forest;
  forest.params_ = params;
  forest.n_features_ = x.cols;
  forest.targets_.assign(y.begin(), y.end());
  forest.trees_.resize(params.n_trees);

  const std::size_t n = x.rows();
  auto grow = [&](std::size_t k) {
    Rng rng(derive_seed(params.seed, "tree", k));
    std::vector<std::size_t> sample(n);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& s : sample) s = pick(rng);
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    forest.trees_[k] = RegressionTree::fit(x, y, sample, params, rng);
  };

  std::size_t threads = params.n_threads == 0 ? std::thread::hardware_concurrency() : params.n_threads;
  threads = std::clamp<std::size_t>(threads, 1, params.n_trees);
  if (threads == 1) {
    for (std::size_t k = 0; k < params.n_trees; ++k) grow(k);
    return forest;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < params.n_trees; k = next++) {
        try {
          grow(k);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  return forest;
}

void QuantileForest::check_dims(std::span<const double> x) const {
  if (x.size() != n_features_) {
    throw ArgumentError("query has " + std::to_string(x.size()) + " features, forest expects " +
                        std::to_string(n_features_));
  }
}

double QuantileForest::predict_mean(std::span<const double> x) const {
  check_dims(x);
  double s = 0.0;
  for (const auto& t : trees_) s += t.predict(x);
  return s / static_cast<double>(trees_.size());
}

WeightVector QuantileForest::leaf_weights(std::span<const double> x) const {
  check_dims(x);
  std::vector<double> acc(targets_.size(), 0.0);
  for (const auto& tree : trees_) {
    auto s = tree.leaf_samples(tree.leaf_of(x));
    const auto node_size = static_cast<double>(s.size());
    for (std::size_t i = 0; i < s.size();) {
      std::size_t j = i;
      while (j < s.size() && s[j] == s[i]) ++j;
      acc[s[i]] += static_cast<double>(j - i) / node_size;
      i = j;
    }
  }
  WeightVector wv;
  const auto k = static_cast<double>(trees_.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (acc[i] > 0.0) {
      wv.indices.push_back(i);
      wv.weights.push_back(acc[i] / k);
    }
  }
  return wv;
}

ConditionalDistribution QuantileForest::distribution(std::span<const double> x) const {
  return ConditionalDistribution(leaf_weights(x), targets_);
}

double QuantileForest::conditional_cdf(std::span<const double> x, double z) const {
  return distribution(x).cdf(z);
}

double QuantileForest::quantile(std::span<const double> x, double p) const {
  if (!(p > 0.0 && p < 1.0)) throw ArgumentError("quantile level must be in (0, 1)");
  return distribution(x).quantile(p);
}

QuantileForest QuantileForest::with_targets(std::vector<double> targets) const {
  if (targets.size() != targets_.size()) throw ArgumentError("target count mismatch");
  QuantileForest copy = *this;
  copy.targets_ = std::move(targets);
  for (auto& t : copy.trees_) t.retarget(copy.targets_);
  return copy;
}

QuantileForest QuantileForest::from_trees(std::vector<RegressionTree> trees,
                                          std::vector<double> targets, std::size_t n_features) {
  if (trees.empty()) throw ArgumentError("forest needs at least one tree");
  QuantileForest f;
  f.trees_ = std::move(trees);
  f.targets_ = std::move(targets);
  f.n_features_ = n_features;
  f.params_.n_trees = f.trees_.size();
  for (auto& t : f.trees_) t.retarget(f.targets_);
  return f;
}

}  // namespace lpci
