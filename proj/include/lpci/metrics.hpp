#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lpci/records.hpp"

namespace lpci {

/// Share of records whose interval covers the truth.
double marginal_coverage(std::span<const IntervalRecord> records);

std::map<std::string, double> per_group_coverage(std::span<const IntervalRecord> records);

/// Mean coverage over the ceil(tail_fraction * |G|) worst-covered groups
/// (at least one group).
double tail_coverage(std::span<const IntervalRecord> records, double tail_fraction = 0.1);

struct WidthStats {
  double mean = 0.0;
  double std = 0.0;  // population formula
  double cov = 0.0;
};

/// Throws ArgumentError when the records are empty or the mean width is 0.
WidthStats width_stats(std::span<const IntervalRecord> records);

/// Keeps, per group, the records with the k largest times; order is preserved.
std::vector<IntervalRecord> filter_last_k(std::span<const IntervalRecord> records, std::size_t k = 20);

struct CoverageReport {
  std::string method;
  std::uint64_t seed = 0;
  std::string filter = "all";
  std::size_t n_records = 0;
  std::size_t n_groups = 0;
  double marginal_coverage = 0.0;
  double tail_coverage = 0.0;
  std::map<std::string, double> per_group_coverage;
  double width_mean = 0.0;
  double width_std = 0.0;
  std::optional<double> width_cov;  // empty when every width is 0
  /// Target standard deviation used to express widths in standardized units.
  double target_scale = 1.0;

  double width_mean_standardized() const { return width_mean / target_scale; }
  double width_std_standardized() const { return width_std / target_scale; }
};

CoverageReport make_report(std::span<const IntervalRecord> records, std::string filter = "all",
                           double target_scale = 1.0, double tail_fraction = 0.1);

void to_json(nlohmann::json& j, const CoverageReport& r);
void from_json(const nlohmann::json& j, CoverageReport& r);

/// Aligned text table with one row per report.
std::string format_report_table(std::span<const CoverageReport> reports);

}  // namespace lpci
