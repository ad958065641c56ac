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

#ifndef MOBPRIV_BASELINES_H_
#define MOBPRIV_BASELINES_H_

// Comparison systems: independently trained task models (the unprotected
// reference) and planar-Laplace location perturbation calibrated by the
// dilation of a spanner.

#include <cstdint>
#include <utility>
#include <vector>

#include "mobpriv/adversarial.h"
#include "mobpriv/nets.h"
#include "mobpriv/random.h"
#include "mobpriv/trajdata.h"

namespace mobpriv {

// Three task models with the same layer shapes as the adversarial units but
// no shared encoder and no coupling.
struct OptimalIms {
  Encoder reconstruction_encoder;
  Decoder decoder;
  Encoder prediction_encoder;
  Head predictor;
  Encoder reid_encoder;
  Head reidentifier;

  static OptimalIms create(const NetConfig& config, std::uint64_t seed);
  TaskNetworks networks() const;
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

struct OptimalImsResult {
  OptimalIms models;
  TaskMetrics test;  // reference row: accuracies and reconstruction distance
  TrainLog log;
};

// Trains each task model on its own loss only, all on the same mini-batch
// sequence, and scores them on the test split.
OptimalImsResult train_optimal_ims(const DatasetSplit& split,
                                   const GridSpec& grid, const NetConfig& net,
                                   const TrainConfig& config);

// ---------------------------------------------------------------------------
// Spanner dilation

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct SpannerEdge {
  std::size_t u = 0;
  std::size_t v = 0;
  double weight = 0.0;
};

struct SpannerGraph {
  std::vector<Point2> vertices;
  std::vector<SpannerEdge> edges;
};

// All-pairs shortest-path distances (Floyd-Warshall); infinity when
// unreachable.
std::vector<std::vector<double>> shortest_paths(const SpannerGraph& g);

// max over distinct vertex pairs of d_G / d_x, d_x Euclidean.
double dilation(const SpannerGraph& g);

// ---------------------------------------------------------------------------
// Planar Laplace

struct PlanarLaplaceConfig {
  double epsilon = 0.5;  // per unit distance (degrees)
  double dilation = 1.1;

  double effective_epsilon() const { return epsilon / dilation; }
  void validate() const;
};

// Radius r with P(R <= r) = 1 - (1 + εr)e^(-εr) = p, by bisection.
double planar_laplace_radius(double epsilon, double p);

// Adds planar-Laplace noise at the effective epsilon: uniform angle, radial
// density ∝ ε²·r·e^(-εr).
LatLon planar_laplace_perturb(const LatLon& loc,
                              const PlanarLaplaceConfig& config, Rng& rng);

// Perturbs every record's cell center and re-discretizes, clamping into the
// box. User ids and timestamps are unchanged. One RNG stream per user.
Streams perturb_dataset(const Streams& streams, const GridSpec& grid,
                        const PlanarLaplaceConfig& config, std::uint64_t seed);

}  // namespace mobpriv

#endif  // MOBPRIV_BASELINES_H_
