#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"
#include "lpci/panel_data.hpp"

namespace lpci {

/// Heteroscedastic AR(1) panel:
///   Y_t = mu_g + phi * Y_{t-1} + sigma_g * eta_t,  eta_t ~ N(0, 1)
/// with mu_g ~ U[-group_effect_scale, group_effect_scale] and
/// sigma_g ~ U[sigma_min, sigma_max]. Y_0 is drawn from the stationary law.
struct SyntheticSpec {
  std::size_t n_groups = 100;
  std::size_t n_times = 30;
  double phi = 0.6;
  double group_effect_scale = 1.0;
  double sigma_min = 0.5;
  double sigma_max = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

/// Groups are named g000, g001, ...; times run 0..n_times-1.
PanelDataset generate_synthetic(const SyntheticSpec& spec);

/// Per-group parameters drawn by generate_synthetic, exposed for tests.
struct SyntheticGroup {
  double mu = 0.0;
  double sigma = 1.0;
};
std::vector<SyntheticGroup> synthetic_group_params(const SyntheticSpec& spec);

}  // namespace lpci
