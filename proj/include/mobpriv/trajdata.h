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

#ifndef MOBPRIV_TRAJDATA_H_
#define MOBPRIV_TRAJDATA_H_

// Trajectory data model: grid discretization, per-user record streams,
// resampling, windowing, one-hot encoding, temporal splits, CSV I/O and a
// seeded synthetic mobility generator.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mobpriv/tensor.h"

namespace mobpriv {

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

// Rectangular lat/lon box cut into square cells, indexed row-major from
// (lat_min, lon_min).
class GridSpec {
 public:
  static GridSpec create(double lat_min, double lat_max, double lon_min,
                         double lon_max, double granularity);
  // A grid of n_rows × n_cols cells anchored at (lat_min, lon_min).
  static GridSpec with_cells(double lat_min, double lon_min,
                             double granularity, std::size_t n_rows,
                             std::size_t n_cols);

  double lat_min() const { return lat_min_; }
  double lat_max() const { return lat_max_; }
  double lon_min() const { return lon_min_; }
  double lon_max() const { return lon_max_; }
  double granularity() const { return granularity_; }
  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return n_cols_; }
  std::size_t num_cells() const { return n_rows_ * n_cols_; }
  // Location classes; every cell is a class.
  std::size_t num_locations() const { return num_cells(); }

  bool contains(double lat, double lon) const;
  int discretize(double lat, double lon) const;
  LatLon cell_center(int cell) const;
  // Clamps into the box before discretizing.
  int discretize_clamped(double lat, double lon) const;
  int cell_at(std::size_t row, std::size_t col) const {
    return static_cast<int>(row * n_cols_ + col);
  }
  std::size_t row_of(int cell) const { return cell / n_cols_; }
  std::size_t col_of(int cell) const { return cell % n_cols_; }

 private:
  GridSpec() = default;
  double lat_min_ = 0, lat_max_ = 0, lon_min_ = 0, lon_max_ = 0;
  double granularity_ = 0;
  std::size_t n_rows_ = 0, n_cols_ = 0;
};

struct LocationRecord {
  std::int64_t user = 0;
  std::int64_t timestamp = 0;  // seconds since epoch
  int cell = 0;

  bool operator==(const LocationRecord&) const = default;
};

// One user's records in timestamp order.
struct UserStream {
  std::int64_t user = 0;
  std::vector<LocationRecord> records;
};

// Streams ordered by user id. A user's dense class index is its position.
using Streams = std::vector<UserStream>;

struct TraceWindow {
  std::vector<int> cells;                // SL input cells
  std::vector<std::int64_t> timestamps;  // SL input timestamps
  int next_location = 0;                 // y
  int user = 0;                          // z, dense user index
  std::int64_t next_timestamp = 0;

  std::size_t length() const { return cells.size(); }
  std::int64_t start_time() const { return timestamps.front(); }
  std::int64_t end_time() const { return timestamps.back(); }
};

struct DatasetSplit {
  std::vector<TraceWindow> train;
  std::vector<TraceWindow> test;
  std::size_t num_users = 0;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kDefaultTimeSlots = 24;

// Time slot of a timestamp; with 24 slots this is the UTC hour of day.
int time_slot(std::int64_t timestamp, std::size_t time_slots);

// Keeps the first record of each Δt bin, bins aligned at each user's first
// timestamp.
Streams resample(const Streams& streams, std::int64_t dt_seconds);

// Stride-1 windows of length SL; each labelled with the following record's
// cell and the user's dense index.
std::vector<TraceWindow> make_windows(const Streams& streams, std::size_t sl);

// SL × (Y + T) matrix: per step a location one-hot then a time-slot one-hot.
Tensor encode_window(const TraceWindow& window, const GridSpec& grid,
                     std::size_t time_slots = kDefaultTimeSlots);

// A mini-batch in the layout the networks consume: one [B × (Y+T)] tensor
// per time step, the same data stacked step-major into [(SL·B) × (Y+T)]
// (row t·B + b), and the labels.
struct EncodedBatch {
  std::vector<Tensor> steps;
  Tensor stacked;
  std::vector<int> next_locations;
  std::vector<int> users;

  std::size_t batch_size() const { return next_locations.size(); }
};

EncodedBatch encode_batch(std::span<const TraceWindow> windows,
                          std::span<const std::size_t> indices,
                          const GridSpec& grid,
                          std::size_t time_slots = kDefaultTimeSlots);
EncodedBatch encode_batch(std::span<const TraceWindow> windows,
                          const GridSpec& grid,
                          std::size_t time_slots = kDefaultTimeSlots);

// Per user, the first floor(fraction·n) windows (temporal order) train and
// the rest test. Users with fewer than two windows go entirely to train.
DatasetSplit split_windows(std::span<const TraceWindow> windows,
                           std::size_t num_users, double fraction = 0.8);

// Number of distinct cells observed across all streams.
std::size_t observed_locations(const Streams& streams);
std::size_t total_records(const Streams& streams);

// ---------------------------------------------------------------------------
// CSV I/O: header `user,timestamp,lat,lon`.

struct CsvLoadResult {
  Streams streams;
  std::size_t skipped_rows = 0;
};

CsvLoadResult load_csv(const std::filesystem::path& path,
                       const GridSpec& grid);
// Writes each record at its cell center.
void write_csv(const std::filesystem::path& path, const Streams& streams,
               const GridSpec& grid);

// ---------------------------------------------------------------------------
// Synthetic mobility

struct Anchors {
  int home = 0;
  int work = 0;
};

struct SyntheticConfig {
  std::size_t num_users = 20;
  std::size_t n_rows = 8;
  std::size_t n_cols = 8;
  double lat_min = 0.0;
  double lon_min = 0.0;
  double granularity = 1.0;
  // Explicit per-user anchors; drawn from the seed when empty.
  std::vector<Anchors> anchors;
  // Drawn anchors come from pools of distinct home and work cells; user u
  // takes home u mod H and work (u mod H + u div H) mod W, so pairs are
  // unique while users <= H·W. A pool size of 0 means one cell per user.
  std::size_t home_pool = 5;
  std::size_t work_pool = 5;
  // Transition weights from cell c when anchor A is active for the next
  // record: 1 for c and each king-move neighbour of c, plus kappa on A and
  // kappa·neighbor_weight on each neighbour of A.
  double kappa = 200.0;
  double neighbor_weight = 0.01;
  std::size_t records_per_user = 2000;
  std::int64_t time_step = 4320;
  std::int64_t start_time = 1'600'000'000;  // a UTC midnight
  int work_start_hour = 8;
  int work_end_hour = 20;
  std::uint64_t seed = 1;

  GridSpec grid() const;
  void validate() const;
};

// Anchors actually used for `config` (explicit or seeded draw).
std::vector<Anchors> resolve_anchors(const SyntheticConfig& config);

// Anchor the user heads for at a given timestamp.
int active_anchor(const SyntheticConfig& config, const Anchors& anchors,
                  std::int64_t timestamp);

// Transition distribution over all cells from `cell` when the next record
// falls at `next_timestamp`.
std::vector<double> transition_probabilities(const SyntheticConfig& config,
                                             const Anchors& anchors, int cell,
                                             std::int64_t next_timestamp);

Streams generate_synthetic(const SyntheticConfig& config);

}  // namespace mobpriv

#endif  // MOBPRIV_TRAJDATA_H_
