#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lpci {

/// One (group, time) prediction interval. `covered` is lower <= y_true <= upper.
struct IntervalRecord {
  std::string group;
  std::int64_t time = 0;
  double y_true = 0.0;
  double y_pred = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double beta = 0.0;
  bool covered = false;

  double width() const { return upper - lower; }
  friend bool operator==(const IntervalRecord&, const IntervalRecord&) = default;
};

inline bool is_covered(double lower, double upper, double y) { return lower <= y && y <= upper; }

/// Fills y_true and the covered flag.
void reveal(IntervalRecord& r, double y_true);

/// CSV with header group,time,y_true,y_pred,lower,upper,beta,covered; doubles
/// use shortest round-trip formatting so output is byte-stable.
void write_records_csv(std::span<const IntervalRecord> records, const std::filesystem::path& path);
std::string records_to_csv(std::span<const IntervalRecord> records);
std::vector<IntervalRecord> read_records_csv(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace lpci
