#include "lpci/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "lpci/error.hpp"

namespace lpci {

namespace {

void require_records(std::span<const IntervalRecord> records) {
  if (records.empty()) throw ArgumentError("no interval records");
}

}  // namespace

double marginal_coverage(std::span<const IntervalRecord> records) {
  require_records(records);
  const auto hits = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.covered; });
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::map<std::string, double> per_group_coverage(std::span<const IntervalRecord> records) {
  require_records(records);
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& r : records) {
    auto& [hit, n] = counts[r.group];
    hit += r.covered ? 1 : 0;
    ++n;
  }
  std::map<std::string, double> out;
  for (const auto& [g, c] : counts) out[g] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return out;
}

double tail_coverage(std::span<const IntervalRecord> records, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw ArgumentError("tail_fraction must be in (0, 1]");
  const auto groups = per_group_coverage(records);
  std::vector<double> cov;
  cov.reserve(groups.size());
  for (const auto& [g, c] : groups) cov.push_back(c);
  std::sort(cov.begin(), cov.end());
  const double raw = std::ceil(tail_fraction * static_cast<double>(cov.size()) - 1e-9);
  const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(raw), 1, cov.size());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += cov[i];
  return s / static_cast<double>(k);
}

namespace {

std::pair<double, double> mean_std(std::span<const IntervalRecord> records) {
  double s = 0.0;
  for (const auto& r : records) s += r.width();
  const double mean = s / static_cast<double>(records.size());
  double ss = 0.0;
  for (const auto& r : records) ss += (r.width() - mean) * (r.width() - mean);
  return {mean, std::sqrt(ss / static_cast<double>(records.size()))};
}

}  // namespace

WidthStats width_stats(std::span<const IntervalRecord> records) {
  require_records(records);
  const auto [mean, sd] = mean_std(records);
  if (mean == 0.0) throw ArgumentError("width CoV is undefined when the mean width is 0");
  return {mean, sd, sd / mean};
}

std::vector<IntervalRecord> filter_last_k(std::span<const IntervalRecord> records, std::size_t k) {
  std::map<std::string, std::vector<std::int64_t>> times;
  for (const auto& r : records) times[r.group].push_back(r.time);
  std::map<std::string, std::int64_t> cutoff;
  for (auto& [g, t] : times) {
    if (t.size() <= k) continue;
    std::sort(t.begin(), t.end(), std::greater<>());
    cutoff[g] = t[k - 1];
  }
  std::vector<IntervalRecord> out;
  for (const auto& r : records) {
    if (k == 0) break;
    auto it = cutoff.find(r.group);
    if (it == cutoff.end() || r.time >= it->second) out.push_back(r);
  }
  return out;
}

CoverageReport make_report(std::span<const IntervalRecord> records, std::string filter,
                           double target_scale, double tail_fraction) {
  require_records(records);
  if (!(target_scale > 0.0)) throw ArgumentError("target_scale must be positive");
  CoverageReport rep;
  rep.filter = std::move(filter);
  rep.n_records = records.size();
  rep.per_group_coverage = per_group_coverage(records);
  rep.n_groups = rep.per_group_coverage.size();
  rep.marginal_coverage = marginal_coverage(records);
  rep.tail_coverage = tail_coverage(records, tail_fraction);
  const auto [mean, sd] = mean_std(records);
  rep.width_mean = mean;
  rep.width_std = sd;
  if (mean > 0.0) rep.width_cov = sd / mean;
  rep.target_scale = target_scale;
  return rep;
}

void to_json(nlohmann::json& j, const CoverageReport& r) {
  j = nlohmann::json{{"method", r.method},
                     {"seed", r.seed},
                     {"filter", r.filter},
                     {"n_records", r.n_records},
                     {"n_groups", r.n_groups},
                     {"marginal_coverage", r.marginal_coverage},
                     {"tail_coverage", r.tail_coverage},
                     {"width_mean", r.width_mean},
                     {"width_std", r.width_std},
                     {"width_cov", r.width_cov ? nlohmann::json(*r.width_cov) : nlohmann::json()},
                     {"target_scale", r.target_scale},
                     {"width_mean_standardized", r.width_mean_standardized()},
                     {"width_std_standardized", r.width_std_standardized()},
                     {"per_group_coverage", r.per_group_coverage}};
}

void from_json(const nlohmann::json& j, CoverageReport& r) {
  r.method = j.value("method", std::string{});
  r.seed = j.value("seed", std::uint64_t{0});
  r.filter = j.value("filter", std::string{"all"});
  r.n_records = j.at("n_records").get<std::size_t>();
  r.n_groups = j.at("n_groups").get<std::size_t>();
  r.marginal_coverage = j.at("marginal_coverage").get<double>();
  r.tail_coverage = j.at("tail_coverage").get<double>();
  r.width_mean = j.at("width_mean").get<double>();
  r.width_std = j.at("width_std").get<double>();
  const auto& cov = j.at("width_cov");
  r.width_cov = cov.is_null() ? std::nullopt : std::optional<double>(cov.get<double>());
  r.target_scale = j.value("target_scale", 1.0);
  r.per_group_coverage = j.value("per_group_coverage", std::map<std::string, double>{});
}

std::string format_report_table(std::span<const CoverageReport> reports) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "method" << std::right << std::setw(6) << "seed"
     << std::setw(9) << "records" << std::setw(10) << "marginal" << std::setw(8) << "tail"
     << std::setw(12) << "width_mean" << std::setw(11) << "width_std" << std::setw(11) << "width_cov"
     << '\n';
  os << std::fixed;
  for (const auto& r : reports) {
    os << std::left << std::setw(16) << r.method << std::right << std::setw(6) << r.seed
       << std::setw(9) << r.n_records << std::setprecision(4) << std::setw(10) << r.marginal_coverage
       << std::setw(8) << r.tail_coverage << std::setw(12) << r.width_mean << std::setw(11)
       << r.width_std;
    if (r.width_cov) {
      os << std::setw(11) << *r.width_cov;
    } else {
      os << std::setw(11) << "n/a";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace lpci
