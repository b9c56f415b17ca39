#include "lpci/residuals.hpp"

#include <algorithm>

#include "lpci/error.hpp"

namespace lpci {

std::vector<double> compute_residuals(std::span<const double> truth,
                                      std::span<const double> preds) {
  if (truth.size() != preds.size()) throw ArgumentError("truth and predictions are misaligned");
  std::vector<double> out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) out[i] = truth[i] - preds[i];
  return out;
}

namespace {

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ArgumentError("gamma must be in [0, 1]");
}

void append_row(TrainingMatrix& m, std::span<const double> ew, std::size_t position,
                std::size_t window, const double* code, double target) {
  // position is 1-based; lags are ew[position-2] down to ew[position-1-window].
  for (std::size_t lag = 1; lag <= window; ++lag) m.features.push_back(ew[position - 1 - lag]);
  if (code) m.features.push_back(*code);
  m.targets.push_back(target);
}

}  // namespace

std::vector<double> ew_mean_series(std::span<const double> residuals, double gamma) {
  check_gamma(gamma);
  if (residuals.empty()) throw ArgumentError("residual series is empty");
  std::vector<double> out;
  out.reserve(residuals.size());
  double decayed = 0.0;
  for (std::size_t k = 0; k < residuals.size(); ++k) {
    decayed = gamma * decayed + residuals[k];
    out.push_back(decayed / static_cast<double>(k + 1));
  }
  return out;
}

ResidualState::ResidualState(std::size_t window, double gamma, bool include_group_code)
    : window_(window), gamma_(gamma), include_group_code_(include_group_code) {
  if (window_ == 0) throw ArgumentError("window must be >= 1");
  check_gamma(gamma_);
}

void ResidualState::register_group(const std::string& group, int code) {
  auto [it, inserted] = groups_.try_emplace(group);
  if (!inserted && it->second.code != code) {
    throw StateError("group '" + group + "' already registered with another code");
  }
  it->second.code = code;
  it->second.rows.n_features = n_features();
}

GroupHistory& ResidualState::mutable_history(const std::string& group) {
  auto it = groups_.find(group);
  if (it == groups_.end()) throw StateError("unknown group '" + group + "'");
  return it->second;
}

const GroupHistory& ResidualState::history(const std::string& group) const {
  auto it = groups_.find(group);
  if (it == groups_.end()) throw StateError("unknown group '" + group + "'");
  return it->second;
}

void ResidualState::push(GroupHistory& h, double residual) {
  h.raw.push_back(residual);
  h.decayed_sum = gamma_ * h.decayed_sum + residual;
  h.ew.push_back(h.decayed_sum / static_cast<double>(h.raw.size()));
  const std::size_t n = h.raw.size();
  if (n > window_) {
    const double code = h.code;
    append_row(h.rows, h.ew, n, window_, include_group_code_ ? &code : nullptr, residual);
  }
}

void ResidualState::append(const std::string& group, double residual) {
  push(mutable_history(group), residual);
}

void ResidualState::seed_dummy(const std::string& group, std::size_t count) {
  GroupHistory& h = mutable_history(group);
  if (!h.raw.empty()) throw StateError("group '" + group + "' already has residual history");
  for (std::size_t i = 0; i < count; ++i) push(h, 0.0);
  h.n_dummy = count;
}

std::vector<std::string> ResidualState::groups_by_code() const {
  std::vector<std::string> names;
  for (const auto& [name, h] : groups_) names.push_back(name);
  std::stable_sort(names.begin(), names.end(), [&](const auto& a, const auto& b) {
    return groups_.at(a).code < groups_.at(b).code;
  });
  return names;
}

std::vector<double> ResidualState::feature_window(const std::string& group) const {
  const GroupHistory& h = history(group);
  const std::size_t n = h.ew.size();
  if (n < window_) {
    throw StateError("group '" + group + "' has " + std::to_string(n) +
                     " residuals, window needs " + std::to_string(window_));
  }
  std::vector<double> x;
  x.reserve(n_features());
  for (std::size_t lag = 0; lag < window_; ++lag) x.push_back(h.ew[n - 1 - lag]);
  if (include_group_code_) x.push_back(h.code);
  return x;
}

TrainingMatrix ResidualState::training_matrix() const {
  TrainingMatrix m;
  m.n_features = n_features();
  m.features.reserve(n_rows() * m.n_features);
  m.targets.reserve(n_rows());
  for (const auto& name : groups_by_code()) {
    const auto& rows = groups_.at(name).rows;
    m.features.insert(m.features.end(), rows.features.begin(), rows.features.end());
    m.targets.insert(m.targets.end(), rows.targets.begin(), rows.targets.end());
  }
  return m;
}

std::size_t ResidualState::n_rows() const {
  std::size_t n = 0;
  for (const auto& [name, h] : groups_) n += h.rows.n_rows();
  return n;
}

nlohmann::json ResidualState::to_json() const {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& name : groups_by_code()) {
    const auto& h = groups_.at(name);
    groups.push_back({{"name", name}, {"code", h.code}, {"n_dummy", h.n_dummy}, {"raw", h.raw}});
  }
  return {{"window", window_},
          {"gamma", gamma_},
          {"include_group_code", include_group_code_},
          {"groups", groups}};
}

ResidualState ResidualState::from_json(const nlohmann::json& j) {
  ResidualState state(j.at("window").get<std::size_t>(), j.at("gamma").get<double>(),
                      j.at("include_group_code").get<bool>());
  for (const auto& g : j.at("groups")) {
    const auto name = g.at("name").get<std::string>();
    state.register_group(name, g.at("code").get<int>());
    const auto raw = g.at("raw").get<std::vector<double>>();
    const auto n_dummy = g.at("n_dummy").get<std::size_t>();
    GroupHistory& h = state.mutable_history(name);
    for (double r : raw) state.push(h, r);
    h.n_dummy = n_dummy;
  }
  return state;
}

TrainingMatrix build_training_matrix(const ResidualState& state,
                                     std::span<const std::string> groups) {
  std::vector<std::string> ordered(groups.begin(), groups.end());
  std::stable_sort(ordered.begin(), ordered.end(), [&](const auto& a, const auto& b) {
    return state.history(a).code < state.history(b).code;
  });
  const std::size_t w = state.window();
  TrainingMatrix m;
  m.n_features = state.n_features();
  for (const auto& name : ordered) {
    const GroupHistory& h = state.history(name);
    if (h.raw.size() <= w) {
      throw ArgumentError("group '" + name + "' has " + std::to_string(h.raw.size()) +
                          " residuals; window " + std::to_string(w) + " needs more");
    }
    const auto ew = ew_mean_series(h.raw, state.gamma());
    const double code = h.code;
    for (std::size_t n = w + 1; n <= h.raw.size(); ++n) {
      append_row(m, ew, n, w, state.include_group_code() ? &code : nullptr, h.raw[n - 1]);
    }
  }
  return m;
}

}  // namespace lpci
