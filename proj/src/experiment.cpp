#include "lpci/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "lpci/covid.hpp"
#include "lpci/error.hpp"
#include "lpci/rng.hpp"

namespace lpci {

NLOHMANN_JSON_SERIALIZE_ENUM(DataSource, {{DataSource::synthetic, "synthetic"},
                                          {DataSource::csv, "csv"},
                                          {DataSource::covid, "covid"}})

void to_json(nlohmann::json& j, const DataConfig& c) {
  j = nlohmann::json{{"source", c.source}};
  switch (c.source) {
    case DataSource::synthetic: j["synthetic"] = c.synthetic; break;
    case DataSource::csv:
      j["path"] = c.path;
      j["schema"] = {{"group", c.schema.group}, {"time", c.schema.time}, {"target", c.schema.target}};
      break;
    case DataSource::covid: j["cache_dir"] = c.cache_dir; break;
  }
}

void from_json(const nlohmann::json& j, DataConfig& c) {
  c = DataConfig{};
  const auto source = j.at("source").get<std::string>();
  if (source != "synthetic" && source != "csv" && source != "covid") {
    throw ConfigError("unknown data source '" + source + "'");
  }
  c.source = j.at("source").get<DataSource>();
  c.synthetic = j.value("synthetic", SyntheticSpec{});
  c.path = j.value("path", std::string{});
  if (j.contains("schema")) {
    const auto& s = j.at("schema");
    c.schema.group = s.value("group", c.schema.group);
    c.schema.time = s.value("time", c.schema.time);
    c.schema.target = s.value("target", c.schema.target);
  }
  c.cache_dir = j.value("cache_dir", std::string{});
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  for (const auto& m : methods) {
    if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end()) {
      throw ConfigError("unknown method '" + m + "'");
    }
    if (m == "spci_per_group" && mode != PanelMode::longitudinal) {
      throw ConfigError("spci_per_group requires longitudinal mode");
    }
  }
  if (mode == PanelMode::cross_sectional && !(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must be in (0, 1)");
  }
  if (train_times && *train_times < 2) throw ConfigError("train_times must be >= 2");
  if (data.source == DataSource::csv && data.path.empty()) throw ConfigError("csv source needs a path");
  if (data.source == DataSource::synthetic) data.synthetic.validate();
  lpci.validate();
  baseline.validate();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"data", c.data},
                     {"mode", to_string(c.mode)},
                     {"test_fraction", c.test_fraction},
                     {"train_times", c.train_times ? nlohmann::json(*c.train_times) : nlohmann::json()},
                     {"methods", c.methods},
                     {"lpci", c.lpci},
                     {"baseline", c.baseline},
                     {"seeds", c.seeds},
                     {"last_k", c.last_k},
                     {"output_dir", c.output_dir},
                     {"jobs", c.jobs}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  ExperimentConfig d;
  c.data = j.value("data", d.data);
  c.mode = panel_mode_from_string(j.value("mode", to_string(d.mode)));
  c.test_fraction = j.value("test_fraction", d.test_fraction);
  c.train_times.reset();
  if (j.contains("train_times") && !j.at("train_times").is_null()) {
    c.train_times = j.at("train_times").get<std::size_t>();
  }
  c.methods = j.value("methods", d.methods);
  c.lpci = j.value("lpci", d.lpci);
  c.baseline = j.value("baseline", d.baseline);
  c.seeds = j.value("seeds", d.seeds);
  c.last_k = j.value("last_k", d.last_k);
  c.output_dir = j.value("output_dir", d.output_dir);
  c.jobs = j.value("jobs", d.jobs);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    ExperimentConfig c = nlohmann::json::parse(in).get<ExperimentConfig>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid config " + path.string() + ": " + e.what());
  }
}

PanelDataset load_source_panel(const DataConfig& data) {
  switch (data.source) {
    case DataSource::csv: return load_csv(data.path, data.schema);
    case DataSource::covid: return fetch_covid(data.cache_dir);
    case DataSource::synthetic: return generate_synthetic(data.synthetic);
  }
  throw ConfigError("unknown data source");
}

PanelDataset panel_for_seed(const ExperimentConfig& config, std::uint64_t seed,
                            const PanelDataset* shared) {
  if (config.data.source == DataSource::synthetic) {
    SyntheticSpec spec = config.data.synthetic;
    spec.seed = derive_seed(spec.seed, "panel", seed);
    return generate_synthetic(spec);
  }
  if (shared) return *shared;
  return load_source_panel(config.data);
}

std::pair<PanelDataset, PanelDataset> split_for_seed(const ExperimentConfig& config,
                                                     const PanelDataset& panel, std::uint64_t seed) {
  if (config.mode == PanelMode::cross_sectional) {
    return split_cross_sectional(panel, config.test_fraction, derive_seed(seed, "split"));
  }
  const std::size_t n_train = config.train_times.value_or(panel.n_times() / 2);
  if (n_train < 1 || n_train >= panel.n_times()) {
    throw ConfigError("train_times " + std::to_string(n_train) + " does not split a panel of " +
                      std::to_string(panel.n_times()) + " times");
  }
  return split_longitudinal(panel, panel.time_label(n_train - 1));
}

namespace {

template <class F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

CellResult run_cell(const ExperimentConfig& config, const std::string& method, std::uint64_t seed,
                    const PanelDataset* shared) {
  const PanelDataset panel = in_stage("data", [&] { return panel_for_seed(config, seed, shared); });
  const auto [train, test] = in_stage("split", [&] { return split_for_seed(config, panel, seed); });

  CellResult cell;
  double target_scale = 1.0;
  in_stage(method, [&] {
    if (method == "lpci") {
      LpciConfig c = config.lpci;
      c.seed = derive_seed(seed, "lpci");
      LpciModel model = LpciModel::fit(train, c);
      cell.records = config.mode == PanelMode::cross_sectional ? model.run_cross_sectional(test)
                                                               : model.run_longitudinal(test);
      target_scale = model.target_scaler().std;
    } else {
      BaselineConfig c = config.baseline;
      c.method = baseline_method_from_string(method);
      c.seed = derive_seed(seed, method);
      cell.records = run_baseline(train, test, c);
      const std::vector<std::string> col{train.target_name()};
      target_scale = fit_scaler(train, col).front().global.std;
    }
  });

  in_stage("metrics", [&] {
    const bool filtered = config.last_k > 0;
    const auto scored = filtered ? filter_last_k(cell.records, config.last_k) : cell.records;
    cell.report = make_report(scored, filtered ? "last_" + std::to_string(config.last_k) : "all",
                              target_scale);
    cell.report.method = method;
    cell.report.seed = seed;
  });
  return cell;
}

namespace {

const std::vector<std::string> kAggregateMetrics = {
    "marginal_coverage", "tail_coverage", "width_mean", "width_std", "width_cov",
    "width_mean_standardized"};

double metric_value(const CoverageReport& r, const std::string& name) {
  if (name == "marginal_coverage") return r.marginal_coverage;
  if (name == "tail_coverage") return r.tail_coverage;
  if (name == "width_mean") return r.width_mean;
  if (name == "width_std") return r.width_std;
  if (name == "width_cov") return r.width_cov.value_or(std::numeric_limits<double>::quiet_NaN());
  if (name == "width_mean_standardized") return r.width_mean_standardized();
  throw ArgumentError("unknown metric '" + name + "'");
}

std::string format_cell(const MetricSummary& m) {
  if (!std::isfinite(m.mean)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << m.mean << " ± " << m.std;
  return os.str();
}

}  // namespace

std::vector<AggregateRow> aggregate_reports(std::span<const CoverageReport> reports) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const CoverageReport*>> by_method;
  for (const auto& r : reports) {
    if (!by_method.contains(r.method)) order.push_back(r.method);
    by_method[r.method].push_back(&r);
  }
  std::vector<AggregateRow> rows;
  for (const auto& method : order) {
    auto list = by_method[method];
    std::stable_sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
    AggregateRow row;
    row.method = method;
    row.n_seeds = list.size();
    for (const auto& name : kAggregateMetrics) {
      double s = 0.0;
      for (auto* r : list) s += metric_value(*r, name);
      const double mean = s / static_cast<double>(list.size());
      double ss = 0.0;
      for (auto* r : list) ss += (metric_value(*r, name) - mean) * (metric_value(*r, name) - mean);
      row.metrics.emplace_back(name, MetricSummary{mean, std::sqrt(ss / static_cast<double>(list.size()))});
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void to_json(nlohmann::json& j, const AggregateRow& r) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, m] : r.metrics) {
    if (std::isfinite(m.mean)) {
      metrics[name] = {{"mean", m.mean}, {"std", m.std}};
    } else {
      metrics[name] = {{"mean", nullptr}, {"std", nullptr}};
    }
  }
  j = nlohmann::json{{"method", r.method}, {"n_seeds", r.n_seeds}, {"metrics", metrics}};
}

std::string aggregate_to_csv(std::span<const AggregateRow> rows) {
  std::ostringstream os;
  os << "method,n_seeds";
  for (const auto& name : kAggregateMetrics) os << ',' << name;
  os << '\n';
  for (const auto& r : rows) {
    os << r.method << ',' << r.n_seeds;
    for (const auto& [name, m] : r.metrics) os << ',' << format_cell(m);
    os << '\n';
  }
  return os.str();
}

std::string format_aggregate_table(std::span<const AggregateRow> rows) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "method" << std::setw(7) << "seeds";
  for (const auto& name : kAggregateMetrics) os << std::setw(26) << name;
  os << '\n';
  for (const auto& r : rows) {
    os << std::setw(16) << r.method << std::setw(7) << r.n_seeds;
    for (const auto& [name, m] : r.metrics) os << std::setw(26) << format_cell(m);
    os << '\n';
  }
  return os.str();
}

std::string records_file_name(const std::string& method, std::uint64_t seed) {
  return "records_" + method + "_seed" + std::to_string(seed) + ".csv";
}

std::string report_file_name(const std::string& method, std::uint64_t seed) {
  return "report_" + method + "_seed" + std::to_string(seed) + ".json";
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

void write_aggregate(const std::filesystem::path& dir, const std::vector<AggregateRow>& rows) {
  write_text(dir / "aggregate.json", nlohmann::json{{"methods", rows}}.dump(2) + "\n");
  write_text(dir / "aggregate.csv", aggregate_to_csv(rows));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  in_stage("config", [&] { config.validate(); });
  const std::filesystem::path dir = config.output_dir;
  in_stage("output", [&] {
    std::filesystem::create_directories(dir);
    write_text(dir / "config.json", nlohmann::json(config).dump(2) + "\n");
  });

  std::optional<PanelDataset> shared;
  if (config.data.source != DataSource::synthetic) {
    shared = in_stage("data", [&] { return load_source_panel(config.data); });
  }

  std::vector<std::pair<std::string, std::uint64_t>> cells;
  for (const auto& m : config.methods) {
    for (auto s : config.seeds) cells.emplace_back(m, s);
  }
  std::vector<CoverageReport> reports(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const auto& [method, seed] = cells[i];
        const CellResult cell = run_cell(config, method, seed, shared ? &*shared : nullptr);
        in_stage("write", [&] {
          write_records_csv(cell.records, dir / records_file_name(method, seed));
          write_text(dir / report_file_name(method, seed), nlohmann::json(cell.report).dump(2) + "\n");
        });
        reports[i] = cell.report;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t jobs = config.jobs ? config.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, cells.size());
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < jobs; ++i) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ExperimentResult result;
  result.reports = std::move(reports);
  result.aggregate = aggregate_reports(result.reports);
  in_stage("aggregate", [&] { write_aggregate(dir, result.aggregate); });
  return result;
}

ExperimentResult report_directory(const std::filesystem::path& dir) {
  return in_stage("report", [&] {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("report_", 0) == 0 && entry.path().extension() == ".json") {
        files.push_back(entry.path());
      }
    }
    if (files.empty()) throw Error("no report_*.json files in " + dir.string());
    ExperimentResult result;
    for (const auto& f : files) {
      std::ifstream in(f);
      result.reports.push_back(nlohmann::json::parse(in).get<CoverageReport>());
    }
    std::vector<std::string> method_order;
    if (std::ifstream cfg(dir / "config.json"); cfg) {
      method_order = nlohmann::json::parse(cfg).value("methods", std::vector<std::string>{});
    }
    auto rank = [&](const std::string& m) {
      auto it = std::find(method_order.begin(), method_order.end(), m);
      return std::make_pair(static_cast<std::size_t>(it - method_order.begin()), m);
    };
    std::sort(result.reports.begin(), result.reports.end(), [&](const auto& a, const auto& b) {
      return std::make_pair(rank(a.method), a.seed) < std::make_pair(rank(b.method), b.seed);
    });
    result.aggregate = aggregate_reports(result.reports);
    write_aggregate(dir, result.aggregate);
    return result;
  });
}

}  // namespace lpci
