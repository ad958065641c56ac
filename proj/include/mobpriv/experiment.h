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


#ifndef MOBPRIV_EXPERIMENT_H_
#define MOBPRIV_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobpriv/adversarial.h"
#include "mobpriv/baselines.h"
#include "mobpriv/eval.h"
#include "mobpriv/nets.h"
#include "mobpriv/trajdata.h"

namespace mobpriv {

// Invalid experiment configuration. The message starts with
// "<source>:<line>:" when the offending key can be located.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ModelKind { kOptimal, kMopaeOne, kMopaeTwo, kGiDp };

// "optimal", "mopae-I", "mopae-II", "gidp".
std::string model_name(ModelKind kind);
ModelKind parse_model(const std::string& name);

struct DataSource {
  enum class Kind { kSynthetic, kCsv };
  Kind kind = Kind::kSynthetic;
  // Synthetic data is regenerated per seed; the seed field is overridden.
  SyntheticConfig synthetic;
  std::filesystem::path csv_path;
  std::optional<GridSpec> csv_grid;
};

struct SweepGrid {
  double lambda1 = 0.1;
  // lambda3 = 1 - lambda1 - lambda2 at each point.
  std::vector<double> lambda2 = {0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::size_t> sl = {5, 10};
  std::vector<std::int64_t> dt = {600, 1800, 3600};
};

struct ExperimentConfig {
  DataSource data;
  std::size_t sl = 10;
  std::int64_t dt = 0;  // resampling interval; 0 keeps the raw sampling
  double train_fraction = 0.8;
  std::vector<ModelKind> models = {ModelKind::kOptimal, ModelKind::kMopaeTwo};
  std::vector<LossWeights> weights = {{0.1, 0.8, 0.1}};
  SweepGrid sweep;
  TrainConfig train;
  NetConfig net;  // sizes are filled from the data
  PlanarLaplaceConfig gidp;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t jobs = 1;
  bool checkpoints = true;
  std::filesystem::path out = "out";

  void validate() const;
};

// Environment variables starting with MOPAE_.
std::map<std::string, std::string> mopae_environment();

// Parses a JSON document. MOPAE_<SECTION>_<KEY> entries of `env` override
// keys of the named section; MOPAE_<KEY> overrides top-level keys.
ExperimentConfig parse_config(const std::string& text,
                              const std::string& source,
                              const std::map<std::string, std::string>& env);
// The resolved configuration, defaults included, in the input schema.
std::string config_to_json(const ExperimentConfig& config);

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::map<std::string, std::string>& env);

enum class Sweep { kNone, kLambda, kSl, kGranularity };

struct RunSpec {
  ModelKind model = ModelKind::kOptimal;
  LossWeights weights{0.0, 0.0, 0.0};
  std::size_t sl = 10;
  std::int64_t dt = 0;
  std::uint64_t seed = 1;

  std::string id() const;
};

// Runs in provenance order. Optimal references are implied, not listed,
// unless `optimal` is among the configured models.
std::vector<RunSpec> plan_runs(const ExperimentConfig& config, Sweep sweep);

struct PreparedData {
  Streams streams;
  GridSpec grid;
  DatasetSplit split;
};

PreparedData prepare_data(const ExperimentConfig& config, std::size_t sl,
                          std::int64_t dt, std::uint64_t seed);

struct DatasetInfo {
  std::size_t sl = 0;
  std::int64_t dt = 0;
  std::uint64_t seed = 0;
  std::size_t users = 0;
  std::size_t records = 0;
  std::size_t observed_locations = 0;
  std::size_t train_windows = 0;
  std::size_t test_windows = 0;
};

struct ExperimentResult {
  std::vector<EvalReport> rows;     // sorted by provenance
  std::vector<EvalReport> medians;  // seed holds the replicate count
  std::vector<ParetoPoint> front;
  std::vector<DatasetInfo> datasets;
};

// Trains and scores every planned run and writes results.csv, medians.csv,
// pareto.csv, datasets.csv, timings.csv, manifest.json, logs/ and
// checkpoints/ under config.out. Progress lines go to `progress` if set.
ExperimentResult run_experiment(const ExperimentConfig& config, Sweep sweep,
                                std::ostream* progress = nullptr);

// Sorts rows by (model, lambda1, lambda2, lambda3, SL, dt, seed).
void sort_by_provenance(std::vector<EvalReport>& rows);

// Per-configuration medians over seeds.
std::vector<EvalReport> median_reports(const std::vector<EvalReport>& rows);

std::string point_label(const EvalReport& r);
std::vector<ParetoPoint> pareto_of(const std::vector<EvalReport>& rows);

std::vector<EvalReport> read_results_csv(const std::filesystem::path& path);
void write_results_csv(const std::filesystem::path& path,
                       const std::vector<EvalReport>& rows);
void write_medians_csv(const std::filesystem::path& path,
                       const std::vector<EvalReport>& medians);
void write_pareto_csv(const std::filesystem::path& path,
                      const std::vector<ParetoPoint>& front);

// Merges results files into out/results.csv, medians.csv and pareto.csv.
ExperimentResult merge_reports(const std::vector<std::filesystem::path>& inputs,
                               const std::filesystem::path& out);

// Writes the dataset of each seed as out/data_seed<k>.csv.
std::vector<std::filesystem::path> generate_data(
    const ExperimentConfig& config);

}  // namespace mobpriv

#endif  // MOBPRIV_EXPERIMENT_H_
