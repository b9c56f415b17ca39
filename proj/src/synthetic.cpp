#include "lpci/synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

#include "lpci/error.hpp"
#include "lpci/rng.hpp"

namespace lpci {

void SyntheticSpec::validate() const {
  if (n_groups == 0) throw ConfigError("n_groups must be >= 1");
  if (n_times < 2) throw ConfigError("n_times must be >= 2");
  if (!(std::abs(phi) < 1.0)) throw ConfigError("phi must satisfy |phi| < 1");
  if (!(group_effect_scale >= 0.0)) throw ConfigError("group_effect_scale must be >= 0");
  if (!(sigma_min > 0.0)) throw ConfigError("sigma_min must be > 0");
  if (!(sigma_min <= sigma_max)) throw ConfigError("sigma_min must not exceed sigma_max");
}

void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = nlohmann::json{{"n_groups", s.n_groups},   {"n_times", s.n_times},
                     {"phi", s.phi},             {"group_effect_scale", s.group_effect_scale},
                     {"sigma_min", s.sigma_min}, {"sigma_max", s.sigma_max},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  SyntheticSpec d;
  s.n_groups = j.value("n_groups", d.n_groups);
  s.n_times = j.value("n_times", d.n_times);
  s.phi = j.value("phi", d.phi);
  s.group_effect_scale = j.value("group_effect_scale", d.group_effect_scale);
  s.sigma_min = j.value("sigma_min", d.sigma_min);
  s.sigma_max = j.value("sigma_max", d.sigma_max);
  s.seed = j.value("seed", d.seed);
}

namespace {

std::string group_name(std::size_t g, std::size_t n) {
  const std::size_t digits = std::max<std::size_t>(3, std::to_string(n - 1).size());
  std::string s = std::to_string(g);
  return "g" + std::string(digits - s.size(), '0') + s;
}

double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

std::vector<SyntheticGroup> synthetic_group_params(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synthetic.groups"));
  std::vector<SyntheticGroup> out(spec.n_groups);
  for (auto& g : out) {
    g.mu = uniform(rng, -spec.group_effect_scale, spec.group_effect_scale);
    g.sigma = uniform(rng, spec.sigma_min, spec.sigma_max);
  }
  return out;
}

PanelDataset generate_synthetic(const SyntheticSpec& spec) {
  const auto params = synthetic_group_params(spec);
  std::vector<std::string> groups;
  std::vector<double> y;
  y.reserve(spec.n_groups * spec.n_times);
  const double phi = spec.phi;
  for (std::size_t g = 0; g < spec.n_groups; ++g) {
    groups.push_back(group_name(g, spec.n_groups));
    // Each group has its own stream so adding groups never reshuffles others.
    Rng rng(derive_seed(spec.seed, "synthetic.noise", g));
    std::normal_distribution<double> eta(0.0, 1.0);
    const auto [mu, sigma] = params[g];
    double prev = mu / (1.0 - phi) + sigma / std::sqrt(1.0 - phi * phi) * eta(rng);
    y.push_back(prev);
    for (std::size_t t = 1; t < spec.n_times; ++t) {
      prev = mu + phi * prev + sigma * eta(rng);
      y.push_back(prev);
    }
  }
  return PanelDataset(std::move(groups), 0, spec.n_times, std::move(y));
}

}  // namespace lpci
