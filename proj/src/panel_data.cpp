#include "lpci/panel_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "lpci/error.hpp"
#include "lpci/records.hpp"
#include "lpci/rng.hpp"

namespace lpci {

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<double> parse_double(const std::string& text) {
  const std::string s = trim(text);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int(const std::string& text) {
  const std::string s = trim(text);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Moments {
  double mean = 0.0;
  double std = 0.0;
  bool degenerate = true;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  if (xs.empty()) return m;
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(xs.size()));
  auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  m.degenerate = !(*lo < *hi) || !(m.std > 0.0);
  return m;
}

}  // namespace

PanelDataset::PanelDataset(std::vector<std::string> groups, std::int64_t time_origin,
                           std::size_t n_times, std::vector<double> target,
                           std::vector<std::string> exog_names, std::vector<double> exog,
                           std::string target_name)
    : groups_(std::move(groups)),
      time_origin_(time_origin),
      n_times_(n_times),
      target_(std::move(target)),
      exog_names_(std::move(exog_names)),
      exog_(std::move(exog)),
      target_name_(std::move(target_name)) {
  if (n_times_ < 2) throw ArgumentError("panel needs at least 2 time points");
  if (groups_.empty()) throw ArgumentError("panel needs at least one group");
  if (!std::is_sorted(groups_.begin(), groups_.end()) ||
      std::adjacent_find(groups_.begin(), groups_.end()) != groups_.end()) {
    throw ArgumentError("group identifiers must be sorted and unique");
  }
  if (target_.size() != groups_.size() * n_times_) {
    throw UnbalancedError("target size does not match groups x times");
  }
  if (exog_.size() != target_.size() * exog_names_.size()) {
    throw UnbalancedError("exogenous size does not match groups x times x features");
  }
}

std::optional<std::size_t> PanelDataset::group_index(const std::string& name) const {
  auto it = std::lower_bound(groups_.begin(), groups_.end(), name);
  if (it == groups_.end() || *it != name) return std::nullopt;
  return static_cast<std::size_t>(it - groups_.begin());
}

PanelDataset PanelDataset::select_groups(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> groups;
  std::vector<double> target;
  std::vector<double> exog;
  for (std::size_t g : idx) {
    if (g >= n_groups()) throw ArgumentError("group index out of range");
    groups.push_back(groups_[g]);
    auto s = series(g);
    target.insert(target.end(), s.begin(), s.end());
    auto first = exog_.begin() + static_cast<std::ptrdiff_t>(g * n_times_ * n_exog());
    exog.insert(exog.end(), first, first + static_cast<std::ptrdiff_t>(n_times_ * n_exog()));
  }
  return PanelDataset(std::move(groups), time_origin_, n_times_, std::move(target), exog_names_,
                      std::move(exog), target_name_);
}

PanelDataset PanelDataset::slice_times(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > n_times_) throw ArgumentError("invalid time slice");
  const std::size_t len = end - begin;
  std::vector<double> target;
  std::vector<double> exog;
  target.reserve(n_groups() * len);
  for (std::size_t g = 0; g < n_groups(); ++g) {
    for (std::size_t t = begin; t < end; ++t) {
      target.push_back(y(g, t));
      auto e = this->exog(g, t);
      exog.insert(exog.end(), e.begin(), e.end());
    }
  }
  return PanelDataset(groups_, time_label(begin), len, std::move(target), exog_names_,
                      std::move(exog), target_name_);
}

PanelDataset concat_times(const PanelDataset& earlier, const PanelDataset& later) {
  if (earlier.groups() != later.groups()) throw ArgumentError("panels have different groups");
  if (earlier.exog_names() != later.exog_names()) {
    throw ArgumentError("panels have different exogenous columns");
  }
  if (later.time_origin() != earlier.time_label(earlier.n_times())) {
    throw ArgumentError("panels are not contiguous in time");
  }
  const std::size_t n_times = earlier.n_times() + later.n_times();
  std::vector<double> target;
  std::vector<double> exog;
  for (std::size_t g = 0; g < earlier.n_groups(); ++g) {
    for (const PanelDataset* part : {&earlier, &later}) {
      for (std::size_t t = 0; t < part->n_times(); ++t) {
        target.push_back(part->y(g, t));
        auto e = part->exog(g, t);
        exog.insert(exog.end(), e.begin(), e.end());
      }
    }
  }
  return PanelDataset(earlier.groups(), earlier.time_origin(), n_times, std::move(target),
                      earlier.exog_names(), std::move(exog), earlier.target_name());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

PanelDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty csv: " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  auto find_col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t gcol = find_col(schema.group);
  const std::size_t tcol = find_col(schema.time);
  const std::size_t ycol = find_col(schema.target);
  std::vector<std::size_t> xcols;
  std::vector<std::string> xnames;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != gcol && c != tcol && c != ycol) {
      xcols.push_back(c);
      xnames.push_back(header[c]);
    }
  }

  struct Cell {
    double y;
    std::vector<double> x;
  };
  std::map<std::pair<std::string, std::int64_t>, Cell> cells;
  std::set<std::string> groups;
  std::set<std::int64_t> times;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields");
    }
    const std::string group = trim(fields[gcol]);
    auto t = parse_int(fields[tcol]);
    auto y = parse_double(fields[ycol]);
    if (!t) throw SchemaError("line " + std::to_string(line_no) + ": time is not an integer");
    if (!y) throw SchemaError("line " + std::to_string(line_no) + ": target is not numeric");
    Cell cell{*y, {}};
    for (std::size_t c : xcols) {
      auto v = parse_double(fields[c]);
      if (!v) {
        throw SchemaError("line " + std::to_string(line_no) + ": column '" + header[c] +
                          "' is not numeric");
      }
      cell.x.push_back(*v);
    }
    auto [it, inserted] = cells.emplace(std::make_pair(group, *t), std::move(cell));
    if (!inserted) {
      throw DuplicateError("duplicate observation for group '" + group + "' at time " +
                           std::to_string(*t));
    }
    groups.insert(group);
    times.insert(*t);
  }
  if (groups.empty()) throw SchemaError("csv has no data rows");
  const std::int64_t first = *times.begin();
  const std::int64_t last = *times.rbegin();
  if (last - first + 1 != static_cast<std::int64_t>(times.size())) {
    throw UnbalancedError("time indices are not consecutive integers");
  }
  if (cells.size() != groups.size() * times.size()) {
    throw UnbalancedError("panel is unbalanced: " + std::to_string(cells.size()) + " cells for " +
                          std::to_string(groups.size()) + " groups x " +
                          std::to_string(times.size()) + " times");
  }
  std::vector<double> target;
  std::vector<double> exog;
  for (const auto& g : groups) {
    for (std::int64_t t = first; t <= last; ++t) {
      const Cell& cell = cells.at({g, t});
      target.push_back(cell.y);
      exog.insert(exog.end(), cell.x.begin(), cell.x.end());
    }
  }
  return PanelDataset(std::vector<std::string>(groups.begin(), groups.end()), first, times.size(),
                      std::move(target), std::move(xnames), std::move(exog), schema.target);
}

void write_csv(const PanelDataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << "group,time," << d.target_name();
  for (const auto& n : d.exog_names()) out << ',' << quote_if_needed(n);
  out << '\n';
  for (std::size_t g = 0; g < d.n_groups(); ++g) {
    for (std::size_t t = 0; t < d.n_times(); ++t) {
      out << quote_if_needed(d.groups()[g]) << ',' << d.time_label(t) << ','
          << format_double(d.y(g, t));
      for (double x : d.exog(g, t)) out << ',' << format_double(x);
      out << '\n';
    }
  }
}

std::pair<PanelDataset, PanelDataset> split_cross_sectional(const PanelDataset& d,
                                                            double test_fraction,
                                                            std::uint64_t seed) {
  if (d.n_groups() < 2) throw ArgumentError("cross-sectional split needs at least 2 groups");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ArgumentError("test_fraction must be in (0, 1)");
  }
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(d.n_groups())));
  if (n_test == 0 || n_test >= d.n_groups()) {
    throw ArgumentError("test_fraction leaves an empty split");
  }
  std::vector<std::size_t> order(d.n_groups());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  return {d.select_groups(train), d.select_groups(test)};
}

std::pair<PanelDataset, PanelDataset> split_longitudinal(const PanelDataset& d,
                                                         std::int64_t split_time) {
  const std::int64_t first = d.time_origin();
  const std::int64_t last = d.time_label(d.n_times() - 1);
  // Train keeps at least two times so one lagged row exists.
  if (split_time <= first || split_time >= last) {
    throw ArgumentError("split_time must lie strictly inside (" + std::to_string(first) + ", " +
                        std::to_string(last) + ")");
  }
  const auto cut = static_cast<std::size_t>(split_time - first + 1);
  return {d.slice_times(0, cut), d.slice_times(cut, d.n_times())};
}

const ScalerParams& ColumnScaler::params_for(const std::string& group) const {
  if (per_group.empty()) return global;
  auto it = per_group.find(group);
  if (it == per_group.end()) {
    throw ArgumentError("no per-group scaling for group '" + group + "' in column " + column);
  }
  return it->second;
}

PanelScaler fit_scaler(const PanelDataset& train, std::span<const std::string> columns,
                       bool per_group) {
  PanelScaler scaler;
  for (const auto& column : columns) {
    std::optional<std::size_t> exog_col;
    if (column != train.target_name()) {
      auto it = std::find(train.exog_names().begin(), train.exog_names().end(), column);
      if (it == train.exog_names().end()) throw SchemaError("unknown column '" + column + "'");
      exog_col = static_cast<std::size_t>(it - train.exog_names().begin());
    }
    auto value = [&](std::size_t g, std::size_t t) {
      return exog_col ? train.exog(g, t)[*exog_col] : train.y(g, t);
    };
    ColumnScaler cs;
    cs.column = column;
    std::vector<double> all;
    for (std::size_t g = 0; g < train.n_groups(); ++g) {
      std::vector<double> mine;
      for (std::size_t t = 0; t < train.n_times(); ++t) {
        all.push_back(value(g, t));
        mine.push_back(value(g, t));
      }
      if (per_group) {
        Moments m = moments(mine);
        if (m.degenerate) {
          throw DegenerateScaleError("column '" + column + "' is constant for group '" +
                                     train.groups()[g] + "'");
        }
        cs.per_group[train.groups()[g]] = ScalerParams{m.mean, m.std};
      }
    }
    Moments m = moments(all);
    if (m.degenerate) throw DegenerateScaleError("column '" + column + "' is constant");
    cs.global = ScalerParams{m.mean, m.std};
    scaler.push_back(std::move(cs));
  }
  return scaler;
}

const ColumnScaler* find_column(const PanelScaler& scaler, const std::string& column) {
  for (const auto& cs : scaler) {
    if (cs.column == column) return &cs;
  }
  return nullptr;
}

namespace {

PanelDataset transform(const PanelDataset& d, const PanelScaler& scaler, bool forward) {
  std::vector<double> target = d.target_values();
  std::vector<double> exog = d.exog_values();
  const std::size_t nx = d.n_exog();
  for (const auto& cs : scaler) {
    std::optional<std::size_t> exog_col;
    if (cs.column != d.target_name()) {
      auto it = std::find(d.exog_names().begin(), d.exog_names().end(), cs.column);
      if (it == d.exog_names().end()) throw SchemaError("unknown column '" + cs.column + "'");
      exog_col = static_cast<std::size_t>(it - d.exog_names().begin());
    }
    for (std::size_t g = 0; g < d.n_groups(); ++g) {
      const ScalerParams& p = cs.params_for(d.groups()[g]);
      for (std::size_t t = 0; t < d.n_times(); ++t) {
        double& v = exog_col ? exog[(g * d.n_times() + t) * nx + *exog_col]
                             : target[g * d.n_times() + t];
        v = forward ? p.apply(v) : p.invert(v);
      }
    }
  }
  return PanelDataset(d.groups(), d.time_origin(), d.n_times(), std::move(target),
                      d.exog_names(), std::move(exog), d.target_name());
}

}  // namespace

PanelDataset apply_scaler(const PanelDataset& d, const PanelScaler& scaler) {
  return transform(d, scaler, true);
}

PanelDataset invert_scaler(const PanelDataset& d, const PanelScaler& scaler) {
  return transform(d, scaler, false);
}

GroupEncoder::GroupEncoder(std::span<const std::string> groups) { extend(groups); }

std::size_t GroupEncoder::extend(std::span<const std::string> groups) {
  std::set<std::string> fresh;
  for (const auto& g : groups) {
    if (!codes_.contains(g)) fresh.insert(g);
  }
  for (const auto& g : fresh) {
    const int next = static_cast<int>(codes_.size());
    codes_.emplace(g, next);
  }
  return fresh.size();
}

int GroupEncoder::code(const std::string& group) const {
  auto it = codes_.find(group);
  if (it == codes_.end()) throw ArgumentError("unknown group '" + group + "'");
  return it->second;
}

SupervisedPanel make_supervised(const PanelDataset& d, const GroupEncoder& encoder,
                                const SupervisedOptions& options) {
  if (options.n_lags == 0) throw ArgumentError("n_lags must be >= 1");
  if (options.n_lags >= d.n_times()) throw ArgumentError("not enough times for the lag count");
  SupervisedPanel sp;
  sp.n_features = (options.include_group_code ? 1 : 0) + options.n_lags + d.n_exog();
  const std::size_t rows = d.n_groups() * (d.n_times() - options.n_lags);
  sp.features.reserve(rows * sp.n_features);
  sp.targets.reserve(rows);
  for (std::size_t g = 0; g < d.n_groups(); ++g) {
    const int code = options.include_group_code ? encoder.code(d.groups()[g]) : -1;
    for (std::size_t t = options.n_lags; t < d.n_times(); ++t) {
      if (options.include_group_code) sp.features.push_back(static_cast<double>(code));
      for (std::size_t lag = 1; lag <= options.n_lags; ++lag) sp.features.push_back(d.y(g, t - lag));
      auto e = d.exog(g, t);
      sp.features.insert(sp.features.end(), e.begin(), e.end());
      sp.targets.push_back(d.y(g, t));
      sp.group_index.push_back(g);
      sp.group_code.push_back(code);
      sp.time_index.push_back(t);
    }
  }
  return sp;
}

}  // namespace lpci
