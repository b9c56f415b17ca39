#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>

#include "lpci/panel_data.hpp"

namespace lpci {

/// Daily cases by specimen date for lower-tier local authorities, from the
/// UK coronavirus dashboard CSV export. Override with LPCI_COVID_URL.
inline constexpr const char* kCovidDefaultUrl =
    "https://api.coronavirus.data.gov.uk/v2/"
    "data?areaType=ltla&metric=newCasesBySpecimenDate&format=csv";

inline constexpr const char* kCovidCacheFile = "covid_ltla_cases.csv";

/// Days since 1970-01-01 for an ISO "YYYY-MM-DD" date.
std::int64_t parse_iso_day(const std::string& date);
std::string format_iso_day(std::int64_t day);

struct CovidWindow {
  std::string first = "2022-02-01";
  std::string last = "2022-03-31";
};

/// Normalizes the raw export to a panel over `window` (inclusive). Time labels
/// are days since 1970-01-01. Authorities missing any day are dropped;
/// `dropped` receives their count.
PanelDataset parse_covid_csv(std::istream& in, const CovidWindow& window = {},
                             std::size_t* dropped = nullptr);

/// Cache directory: `cache_dir` if non-empty, else LPCI_CACHE_DIR, else
/// ".cache/lpci".
std::filesystem::path resolve_cache_dir(const std::filesystem::path& cache_dir);

/// Returns the panel from the cached raw file, downloading it first when the
/// cache is empty. Throws FetchError if the download fails.
PanelDataset fetch_covid(const std::filesystem::path& cache_dir = {},
                         const CovidWindow& window = {});

}  // namespace lpci
