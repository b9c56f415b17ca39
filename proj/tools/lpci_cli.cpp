// Command-line front end: run experiments, generate synthetic panels, fetch
// the covid panel and re-aggregate reports.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "lpci/covid.hpp"
#include "lpci/error.hpp"
#include "lpci/experiment.hpp"
#include "lpci/synthetic.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
            const std::string& out, const std::string& method, const std::optional<std::size_t>& jobs) {
  lpci::ExperimentConfig config = lpci::load_experiment_config(config_path);
  if (seed) config.seeds = {*seed};
  if (!out.empty()) config.output_dir = out;
  if (!method.empty()) config.methods = {method};
  if (jobs) config.jobs = *jobs;
  const auto result = lpci::run_experiment(config);
  std::cout << lpci::format_report_table(result.reports) << '\n'
            << lpci::format_aggregate_table(result.aggregate)
            << "wrote " << result.reports.size() << " report(s) to " << config.output_dir << '\n';
  return 0;
}

int cmd_generate(const std::string& spec_path, const std::string& out) {
  std::ifstream in(spec_path);
  if (!in) throw lpci::ConfigError("cannot open spec " + spec_path);
  lpci::SyntheticSpec spec;
  try {
    spec = nlohmann::json::parse(in).get<lpci::SyntheticSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw lpci::ConfigError("invalid spec " + spec_path + ": " + e.what());
  }
  const auto panel = lpci::generate_synthetic(spec);
  lpci::write_csv(panel, out);
  std::cout << "wrote " << panel.n_groups() << " groups x " << panel.n_times() << " times to "
            << out << '\n';
  return 0;
}

int cmd_fetch_covid(const std::string& cache, const std::string& out) {
  const auto panel = lpci::fetch_covid(cache);
  if (!out.empty()) lpci::write_csv(panel, out);
  std::cout << panel.n_groups() << " authorities, " << panel.n_times() << " days starting "
            << lpci::format_iso_day(panel.time_origin()) << '\n';
  return 0;
}

int cmd_report(const std::string& dir) {
  const auto result = lpci::report_directory(dir);
  std::cout << lpci::format_report_table(result.reports) << '\n'
            << lpci::format_aggregate_table(result.aggregate);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal predictive conformal inference experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string run_out;
  std::string method;
  std::optional<std::size_t> jobs;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Run a single seed");
  run->add_option("--out", run_out, "Output directory");
  run->add_option("--method", method, "Run a single method")
      ->check(CLI::IsMember({"lpci", "split", "cqr", "spci_per_group"}));
  run->add_option("--jobs", jobs, "Parallel (method, seed) cells");

  std::string spec_path;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Write a synthetic panel as CSV");
  gen->add_option("--spec", spec_path, "Synthetic spec JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output CSV")->required();

  std::string cache;
  std::string covid_out;
  auto* fetch = app.add_subcommand("fetch-covid", "Download (or reuse) the covid panel");
  fetch->add_option("--cache", cache, "Cache directory (default: $LPCI_CACHE_DIR)");
  fetch->add_option("--out", covid_out, "Also write the normalized panel as CSV");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Re-aggregate report JSON files");
  report->add_option("--in", report_dir, "Run output directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, seed, run_out, method, jobs);
    if (*gen) return cmd_generate(spec_path, gen_out);
    if (*fetch) return cmd_fetch_covid(cache, covid_out);
    if (*report) return cmd_report(report_dir);
  } catch (const lpci::StageError& e) {
    std::cerr << "error " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
