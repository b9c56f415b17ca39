#include "lpci/records.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "lpci/error.hpp"
#include "lpci/panel_data.hpp"

namespace lpci {

void reveal(IntervalRecord& r, double y_true) {
  r.y_true = y_true;
  r.covered = is_covered(r.lower, r.upper, y_true);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double parse_field(const std::string& s, const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw SchemaError(std::string("record field ") + what + " is not numeric: '" + s + "'");
  }
  return v;
}

}  // namespace

std::string records_to_csv(std::span<const IntervalRecord> records) {
  std::ostringstream out;
  out << "group,time,y_true,y_pred,lower,upper,beta,covered\n";
  for (const auto& r : records) {
    out << quote_if_needed(r.group) << ',' << r.time << ',' << format_double(r.y_true) << ','
        << format_double(r.y_pred) << ',' << format_double(r.lower) << ','
        << format_double(r.upper) << ',' << format_double(r.beta) << ',' << (r.covered ? 1 : 0)
        << '\n';
  }
  return out.str();
}

void write_records_csv(std::span<const IntervalRecord> records,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << records_to_csv(records);
}

std::vector<IntervalRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "group,time,y_true,y_pred,lower,upper,beta,covered") {
    throw SchemaError("unexpected record header in " + path.string());
  }
  std::vector<IntervalRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 8) throw SchemaError("record line has " + std::to_string(f.size()) + " fields");
    IntervalRecord r;
    r.group = f[0];
    r.time = static_cast<std::int64_t>(parse_field(f[1], "time"));
    r.y_true = parse_field(f[2], "y_true");
    r.y_pred = parse_field(f[3], "y_pred");
    r.lower = parse_field(f[4], "lower");
    r.upper = parse_field(f[5], "upper");
    r.beta = parse_field(f[6], "beta");
    r.covered = f[7] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace lpci
