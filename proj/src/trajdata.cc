// Copyright 2026 The mobpriv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mobpriv/trajdata.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mobpriv/errors.h"
#include "mobpriv/random.h"

namespace mobpriv {

namespace {

// Floating slack for extents such as (46.61 - 46.50) / 0.01.
constexpr double kSlack = 1e-9;

std::size_t cells_along(double lo, double hi, double granularity) {
  const double n = (hi - lo) / granularity;
  return static_cast<std::size_t>(std::ceil(n - kSlack * std::max(1.0, n)));
}

std::size_t index_along(double x, double lo, double granularity,
                        std::size_t n) {
  const double pos = (x - lo) / granularity;
  auto idx = static_cast<long long>(std::floor(pos + kSlack));
  idx = std::clamp<long long>(idx, 0, static_cast<long long>(n) - 1);
  return static_cast<std::size_t>(idx);
}

}  // namespace

// ---------------------------------------------------------------------------
// GridSpec

GridSpec GridSpec::create(double lat_min, double lat_max, double lon_min,
                          double lon_max, double granularity) {
  if (!(lat_min < lat_max) || !(lon_min < lon_max)) {
    throw ContractError("grid bounding box must satisfy min < max");
  }
  if (!(granularity > 0.0)) {
    throw ContractError("grid granularity must be positive");
  }
  GridSpec g;
  g.lat_min_ = lat_min;
  g.lat_max_ = lat_max;
  g.lon_min_ = lon_min;
  g.lon_max_ = lon_max;
  g.granularity_ = granularity;
  g.n_rows_ = cells_along(lat_min, lat_max, granularity);
  g.n_cols_ = cells_along(lon_min, lon_max, granularity);
  return g;
}

GridSpec GridSpec::with_cells(double lat_min, double lon_min,
                              double granularity, std::size_t n_rows,
                              std::size_t n_cols) {
  if (n_rows == 0 || n_cols == 0) {
    throw ContractError("grid needs at least one row and one column");
  }
  GridSpec g = create(lat_min, lat_min + granularity * n_rows, lon_min,
                      lon_min + granularity * n_cols, granularity);
  g.n_rows_ = n_rows;
  g.n_cols_ = n_cols;
  return g;
}

bool GridSpec::contains(double lat, double lon) const {
  const double tol = kSlack * granularity_;
  return lat >= lat_min_ - tol && lat <= lat_max_ + tol &&
         lon >= lon_min_ - tol && lon <= lon_max_ + tol;
}

int GridSpec::discretize(double lat, double lon) const {
  if (!std::isfinite(lat) || !std::isfinite(lon) || !contains(lat, lon)) {
    std::ostringstream os;
    os.precision(10);
    os << "point (" << lat << ", " << lon << ") lies outside the grid box lat ["
       << lat_min_ << ", " << lat_max_ << "] lon [" << lon_min_ << ", "
       << lon_max_ << "]";
    throw OutOfBoundsError(os.str(), lat, lon);
  }
  return discretize_clamped(lat, lon);
}

int GridSpec::discretize_clamped(double lat, double lon) const {
  const std::size_t row = index_along(lat, lat_min_, granularity_, n_rows_);
  const std::size_t col = index_along(lon, lon_min_, granularity_, n_cols_);
  return cell_at(row, col);
}

LatLon GridSpec::cell_center(int cell) const {
  if (cell < 0 || static_cast<std::size_t>(cell) >= num_cells()) {
    throw IndexError("cell " + std::to_string(cell) + " outside [0, " +
                     std::to_string(num_cells()) + ")");
  }
  return {lat_min_ + (row_of(cell) + 0.5) * granularity_,
          lon_min_ + (col_of(cell) + 0.5) * granularity_};
}

// ---------------------------------------------------------------------------
// Streams and windows

int time_slot(std::int64_t timestamp, std::size_t time_slots) {
  constexpr std::int64_t kDay = 86'400;
  std::int64_t sec = timestamp % kDay;
  if (sec < 0) sec += kDay;
  return static_cast<int>(sec * static_cast<std::int64_t>(time_slots) / kDay);
}

Streams resample(const Streams& streams, std::int64_t dt_seconds) {
  if (dt_seconds <= 0) throw ContractError("resample interval must be > 0");
  Streams out;
  out.reserve(streams.size());
  for (const UserStream& s : streams) {
    UserStream kept{s.user, {}};
    if (!s.records.empty()) {
      const std::int64_t origin = s.records.front().timestamp;
      std::int64_t last_bin = -1;
      for (const LocationRecord& r : s.records) {
        const std::int64_t bin = (r.timestamp - origin) / dt_seconds;
        if (bin != last_bin) {
          kept.records.push_back(r);
          last_bin = bin;
        }
      }
    }
    out.push_back(std::move(kept));
  }
  return out;
}

std::vector<TraceWindow> make_windows(const Streams& streams, std::size_t sl) {
  if (sl == 0) throw ContractError("sequence length must be >= 1");
  std::vector<TraceWindow> windows;
  for (std::size_t u = 0; u < streams.size(); ++u) {
    const auto& recs = streams[u].records;
    if (recs.size() <= sl) continue;
    for (std::size_t i = 0; i + sl < recs.size(); ++i) {
      TraceWindow w;
      w.cells.reserve(sl);
      w.timestamps.reserve(sl);
      for (std::size_t j = i; j < i + sl; ++j) {
        w.cells.push_back(recs[j].cell);
        w.timestamps.push_back(recs[j].timestamp);
      }
      w.next_location = recs[i + sl].cell;
      w.next_timestamp = recs[i + sl].timestamp;
      w.user = static_cast<int>(u);
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

Tensor encode_window(const TraceWindow& window, const GridSpec& grid,
                     std::size_t time_slots) {
  const std::size_t y = grid.num_locations();
  const std::size_t width = y + time_slots;
  std::vector<double> v(window.length() * width, 0.0);
  for (std::size_t t = 0; t < window.length(); ++t) {
    const int cell = window.cells[t];
    if (cell < 0 || static_cast<std::size_t>(cell) >= y) {
      throw IndexError("window cell " + std::to_string(cell) +
                       " outside the grid");
    }
    v[t * width + cell] = 1.0;
    v[t * width + y + time_slot(window.timestamps[t], time_slots)] = 1.0;
  }
  return Tensor::from({window.length(), width}, std::move(v));
}

EncodedBatch encode_batch(std::span<const TraceWindow> windows,
                          std::span<const std::size_t> indices,
                          const GridSpec& grid, std::size_t time_slots) {
  if (indices.empty()) throw ContractError("encode_batch: empty batch");
  const std::size_t batch = indices.size();
  const std::size_t sl = windows[indices[0]].length();
  const std::size_t y = grid.num_locations();
  const std::size_t width = y + time_slots;
  std::vector<double> stacked(sl * batch * width, 0.0);
  EncodedBatch out;
  out.next_locations.reserve(batch);
  out.users.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const TraceWindow& w = windows[indices[b]];
    if (w.length() != sl) {
      throw ShapeError("encode_batch: windows of different lengths");
    }
    for (std::size_t t = 0; t < sl; ++t) {
      const int cell = w.cells[t];
      if (cell < 0 || static_cast<std::size_t>(cell) >= y) {
        throw IndexError("window cell " + std::to_string(cell) +
                         " outside the grid");
      }
      double* row = stacked.data() + (t * batch + b) * width;
      row[cell] = 1.0;
      row[y + time_slot(w.timestamps[t], time_slots)] = 1.0;
    }
    out.next_locations.push_back(w.next_location);
    out.users.push_back(w.user);
  }
  out.steps.reserve(sl);
  for (std::size_t t = 0; t < sl; ++t) {
    auto begin = stacked.begin() + t * batch * width;
    out.steps.push_back(Tensor::from(
        {batch, width}, std::vector<double>(begin, begin + batch * width)));
  }
  out.stacked = Tensor::from({sl * batch, width}, std::move(stacked));
  return out;
}

EncodedBatch encode_batch(std::span<const TraceWindow> windows,
                          const GridSpec& grid, std::size_t time_slots) {
  std::vector<std::size_t> all(windows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return encode_batch(windows, all, grid, time_slots);
}

DatasetSplit split_windows(std::span<const TraceWindow> windows,
                           std::size_t num_users, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ContractError("split fraction must lie in (0, 1)");
  }
  // Windows arrive grouped per user in temporal order; keep that order but
  // do not rely on grouping.
  std::map<int, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    by_user[windows[i].user].push_back(i);
  }
  DatasetSplit split;
  split.num_users = num_users;
  for (auto& [user, idx] : by_user) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return windows[a].end_time() < windows[b].end_time();
    });
    if (idx.size() < 2) {
      split.warnings.push_back("user " + std::to_string(user) + " has " +
                               std::to_string(idx.size()) +
                               " window(s); all assigned to train");
      for (std::size_t i : idx) split.train.push_back(windows[i]);
      continue;
    }
    const auto n_train = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      (k < n_train ? split.train : split.test).push_back(windows[idx[k]]);
    }
  }
  return split;
}

std::size_t observed_locations(const Streams& streams) {
  std::set<int> cells;
  for (const UserStream& s : streams) {
    for (const LocationRecord& r : s.records) cells.insert(r.cell);
  }
  return cells.size();
}

std::size_t total_records(const Streams& streams) {
  std::size_t n = 0;
  for (const UserStream& s : streams) n += s.records.size();
  return n;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  if (s.empty()) return false;
  std::istringstream in(s);
  in >> out;
  return !in.fail() && in.peek() == std::char_traits<char>::eof();
}

}  // namespace

CsvLoadResult load_csv(const std::filesystem::path& path,
                       const GridSpec& grid) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(path.string() + ": empty file, expected a header");
  }
  const auto header = split_fields(line);
  const char* required[] = {"user", "timestamp", "lat", "lon"};
  std::size_t col[4];
  for (int k = 0; k < 4; ++k) {
    auto it = std::find(header.begin(), header.end(), required[k]);
    if (it == header.end()) {
      throw FormatError(path.string() + ": missing column '" +
                        std::string(required[k]) + "'");
    }
    col[k] = static_cast<std::size_t>(it - header.begin());
  }
  std::map<std::int64_t, std::vector<LocationRecord>> by_user;
  CsvLoadResult result;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    std::int64_t user = 0, ts = 0;
    double lat = 0, lon = 0;
    const bool ok = fields.size() == header.size() &&
                    parse_number(fields[col[0]], user) &&
                    parse_number(fields[col[1]], ts) &&
                    parse_number(fields[col[2]], lat) &&
                    parse_number(fields[col[3]], lon) &&
                    grid.contains(lat, lon);
    if (!ok) {
      ++result.skipped_rows;
      continue;
    }
    by_user[user].push_back({user, ts, grid.discretize(lat, lon)});
  }
  for (auto& [user, recs] : by_user) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const LocationRecord& a, const LocationRecord& b) {
                       return a.timestamp < b.timestamp;
                     });
    result.streams.push_back({user, std::move(recs)});
  }
  return result;
}

void write_csv(const std::filesystem::path& path, const Streams& streams,
               const GridSpec& grid) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "user,timestamp,lat,lon\n";
  out.precision(17);
  for (const UserStream& s : streams) {
    for (const LocationRecord& r : s.records) {
      const LatLon c = grid.cell_center(r.cell);
      out << r.user << ',' << r.timestamp << ',' << c.lat << ',' << c.lon
          << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic mobility

GridSpec SyntheticConfig::grid() const {
  return GridSpec::with_cells(lat_min, lon_min, granularity, n_rows, n_cols);
}

void SyntheticConfig::validate() const {
  if (num_users < 2) throw ContractError("synthetic data needs >= 2 users");
  if (n_rows == 0 || n_cols == 0) throw ContractError("empty synthetic grid");
  if (!(kappa > 0.0)) throw ContractError("kappa must be > 0");
  if (!(neighbor_weight >= 0.0)) {
    throw ContractError("neighbor_weight must be >= 0");
  }
  if (time_step <= 0) throw ContractError("time_step must be > 0");
  if (!(granularity > 0.0)) throw ContractError("granularity must be > 0");
  const auto cells = static_cast<int>(n_rows * n_cols);
  if (!anchors.empty()) {
    if (anchors.size() != num_users) {
      throw ContractError("need one anchor pair per user, got " +
                          std::to_string(anchors.size()));
    }
    for (const Anchors& a : anchors) {
      if (a.home < 0 || a.home >= cells || a.work < 0 || a.work >= cells) {
        throw ContractError("anchor cell outside the synthetic grid");
      }
    }
  }
}

std::vector<Anchors> resolve_anchors(const SyntheticConfig& config) {
  config.validate();
  if (!config.anchors.empty()) return config.anchors;
  const std::size_t cells = config.n_rows * config.n_cols;
  const std::size_t homes =
      config.home_pool > 0 ? config.home_pool : config.num_users;
  const std::size_t works =
      config.work_pool > 0 ? config.work_pool : config.num_users;
  std::vector<int> perm(cells);
  for (std::size_t i = 0; i < cells; ++i) perm[i] = static_cast<int>(i);
  Rng rng(derive_seed(config.seed, 0xA11C0));
  rng.shuffle(perm);
  // Pools are disjoint while cells last, then wrap.
  std::vector<Anchors> anchors;
  for (std::size_t u = 0; u < config.num_users; ++u) {
    const std::size_t h = u % homes;
    const std::size_t w = (h + u / homes) % works;
    anchors.push_back({perm[h % cells], perm[(homes + w) % cells]});
  }
  return anchors;
}

int active_anchor(const SyntheticConfig& config, const Anchors& anchors,
                  std::int64_t timestamp) {
  const int hour = time_slot(timestamp, 24);
  const bool at_work =
      hour >= config.work_start_hour && hour < config.work_end_hour;
  return at_work ? anchors.work : anchors.home;
}

std::vector<double> transition_probabilities(const SyntheticConfig& config,
                                             const Anchors& anchors, int cell,
                                             std::int64_t next_timestamp) {
  const auto rows = static_cast<int>(config.n_rows);
  const auto cols = static_cast<int>(config.n_cols);
  std::vector<double> w(config.n_rows * config.n_cols, 0.0);
  auto around = [&](int center, double weight, bool include_center) {
    const int r = center / cols, c = center % cols;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0 && !include_center) continue;
        const int nr = r + dr, nc = c + dc;
        if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
        w[nr * cols + nc] += weight;
      }
    }
  };
  around(cell, 1.0, true);
  const int target = active_anchor(config, anchors, next_timestamp);
  w[target] += config.kappa;
  around(target, config.kappa * config.neighbor_weight, false);
  double total = 0.0;
  for (double x : w) total += x;
  for (double& x : w) x /= total;
  return w;
}

Streams generate_synthetic(const SyntheticConfig& config) {
  const auto anchors = resolve_anchors(config);
  Streams streams;
  streams.reserve(config.num_users);
  for (std::size_t u = 0; u < config.num_users; ++u) {
    Rng rng(derive_seed(config.seed, u + 1));
    UserStream s{static_cast<std::int64_t>(u), {}};
    s.records.reserve(config.records_per_user);
    std::int64_t ts = config.start_time;
    int cell = active_anchor(config, anchors[u], ts);
    for (std::size_t k = 0; k < config.records_per_user; ++k) {
      s.records.push_back({s.user, ts, cell});
      ts += config.time_step;
      cell = static_cast<int>(
          rng.categorical(transition_probabilities(config, anchors[u], cell, ts)));
    }
    streams.push_back(std::move(s));
  }
  return streams;
}

}  // namespace mobpriv
