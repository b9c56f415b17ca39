#include "lpci/covid.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "httplib.h"
#include "lpci/error.hpp"

namespace lpci {

std::int64_t parse_iso_day(const std::string& date) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char dash1 = 0;
  char dash2 = 0;
  std::istringstream is(date);
  if (!(is >> y >> dash1 >> m >> dash2 >> d) || dash1 != '-' || dash2 != '-') {
    throw SchemaError("bad date '" + date + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) throw SchemaError("bad date '" + date + "'");
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

std::string format_iso_day(std::int64_t day) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

PanelDataset parse_covid_csv(std::istream& in, const CovidWindow& window, std::size_t* dropped) {
  const std::int64_t first = parse_iso_day(window.first);
  const std::int64_t last = parse_iso_day(window.last);
  if (last < first) throw ArgumentError("covid window ends before it starts");
  const auto n_days = static_cast<std::size_t>(last - first + 1);

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("covid CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw SchemaError("covid CSV lacks column '" + name + "'");
  };
  const std::size_t c_area = column("areaName");
  const std::size_t c_date = column("date");
  const std::size_t c_cases = column("newCasesBySpecimenDate");

  std::map<std::string, std::map<std::int64_t, double>> cells;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw SchemaError("ragged covid CSV row: " + line);
    const std::int64_t day = parse_iso_day(f[c_date]);
    auto& series = cells[f[c_area]];
    if (day < first || day > last || f[c_cases].empty()) continue;
    try {
      std::size_t used = 0;
      const double v = std::stod(f[c_cases], &used);
      if (used != f[c_cases].size()) throw std::invalid_argument("trailing");
      series[day] = v;
    } catch (const std::logic_error&) {
      throw SchemaError("non-numeric case count '" + f[c_cases] + "'");
    }
  }

  std::vector<std::string> groups;
  std::vector<double> y;
  std::size_t n_dropped = 0;
  for (const auto& [area, series] : cells) {
    if (series.size() != n_days) {
      ++n_dropped;
      continue;
    }
    groups.push_back(area);
    for (const auto& [day, v] : series) y.push_back(v);
  }
  if (dropped) *dropped = n_dropped;
  if (groups.empty()) throw UnbalancedError("no authority has a complete covid window");
  return PanelDataset(std::move(groups), first, n_days, std::move(y), {}, {}, "cases");
}

std::filesystem::path resolve_cache_dir(const std::filesystem::path& cache_dir) {
  if (!cache_dir.empty()) return cache_dir;
  if (const char* env = std::getenv("LPCI_CACHE_DIR"); env && *env) return env;
  return ".cache/lpci";
}

namespace {

void download(const std::string& url, const std::filesystem::path& dest) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw FetchError("bad URL '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string host = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (url.rfind("https://", 0) == 0) {
    throw FetchError("this build has no HTTPS support; populate the cache manually");
  }
#endif
  httplib::Client client(host);
  client.set_follow_location(true);
  client.set_connection_timeout(30);
  client.set_read_timeout(300);
  auto res = client.Get(path);
  if (!res) throw FetchError("request to " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw FetchError("request to " + url + " returned HTTP " + std::to_string(res->status));
  }
  std::filesystem::create_directories(dest.parent_path());
  const auto tmp = dest.string() + ".part";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << res->body;
    if (!out) throw FetchError("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, dest);
}

}  // namespace

PanelDataset fetch_covid(const std::filesystem::path& cache_dir, const CovidWindow& window) {
  const auto dir = resolve_cache_dir(cache_dir);
  const auto raw = dir / kCovidCacheFile;
  if (!std::filesystem::exists(raw)) {
    const char* env = std::getenv("LPCI_COVID_URL");
    const std::string url = env && *env ? env : kCovidDefaultUrl;
    std::clog << "fetch-covid: downloading " << url << '\n';
    download(url, raw);
  }
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw FetchError("cannot read cached file " + raw.string());
  std::size_t dropped = 0;
  PanelDataset panel = parse_covid_csv(in, window, &dropped);
  std::clog << "fetch-covid: " << panel.n_groups() << " authorities, " << panel.n_times()
            << " days; dropped " << dropped << " incomplete authorities\n";
  return panel;
}

}  // namespace lpci
