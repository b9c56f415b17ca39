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

#include "json.hpp"
#include "lpci/baselines.hpp"
#include "lpci/engine.hpp"
#include "lpci/metrics.hpp"
#include "lpci/panel_data.hpp"
#include "lpci/synthetic.hpp"

namespace lpci {

enum class DataSource { synthetic, csv, covid };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  /// Used for synthetic data; the run seed is mixed into `synthetic.seed` so
  /// every run seed sees a fresh panel.
  SyntheticSpec synthetic;
  std::string path;  // csv
  CsvSchema schema;  // csv
  std::string cache_dir;  // covid; empty falls back to LPCI_CACHE_DIR

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

inline const std::vector<std::string> kMethods = {"lpci", "split", "cqr", "spci_per_group"};

struct ExperimentConfig {
  DataConfig data;
  PanelMode mode = PanelMode::cross_sectional;
  /// Share of groups held out in cross-sectional mode.
  double test_fraction = 0.25;
  /// Number of leading times used for training in longitudinal mode; half
  /// the panel when unset.
  std::optional<std::size_t> train_times;
  std::vector<std::string> methods{"lpci"};
  LpciConfig lpci;
  BaselineConfig baseline;
  std::vector<std::uint64_t> seeds{0};
  /// Metrics use each group's last `last_k` records; 0 scores everything.
  std::size_t last_k = 20;
  std::string output_dir = "results";
  /// Parallel (method, seed) cells; 0 picks the hardware count.
  std::size_t jobs = 1;

  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Loads csv/covid panels; synthetic panels are built per seed instead.
PanelDataset load_source_panel(const DataConfig& data);

/// Panel seen by run `seed`: `shared` for csv/covid, a freshly generated one
/// for synthetic sources.
PanelDataset panel_for_seed(const ExperimentConfig& config, std::uint64_t seed,
                            const PanelDataset* shared);

std::pair<PanelDataset, PanelDataset> split_for_seed(const ExperimentConfig& config,
                                                     const PanelDataset& panel, std::uint64_t seed);

struct CellResult {
  std::vector<IntervalRecord> records;  // every emitted interval, unfiltered
  CoverageReport report;                // over the last_k filtered records
};

/// One (method, seed) pipeline run without touching the filesystem.
CellResult run_cell(const ExperimentConfig& config, const std::string& method, std::uint64_t seed,
                    const PanelDataset* shared = nullptr);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population formula across seeds
  friend bool operator==(const MetricSummary&, const MetricSummary&) = default;
};

struct AggregateRow {
  std::string method;
  std::size_t n_seeds = 0;
  std::vector<std::pair<std::string, MetricSummary>> metrics;
  friend bool operator==(const AggregateRow&, const AggregateRow&) = default;
};

/// Mean and std per metric per method; seeds are folded in ascending order.
std::vector<AggregateRow> aggregate_reports(std::span<const CoverageReport> reports);

void to_json(nlohmann::json& j, const AggregateRow& r);
/// method,n_seeds,<metric>... with "mean ± std" cells.
std::string aggregate_to_csv(std::span<const AggregateRow> rows);
std::string format_aggregate_table(std::span<const AggregateRow> rows);

struct ExperimentResult {
  std::vector<CoverageReport> reports;
  std::vector<AggregateRow> aggregate;
};

std::string records_file_name(const std::string& method, std::uint64_t seed);
std::string report_file_name(const std::string& method, std::uint64_t seed);

/// Runs every (method, seed) cell and writes records_*.csv, report_*.json,
/// aggregate.json and aggregate.csv to config.output_dir. Errors surface as
/// StageError.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Re-aggregates the report_*.json files in `dir` and rewrites the aggregate
/// files.
ExperimentResult report_directory(const std::filesystem::path& dir);

}  // namespace lpci
